#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <json.hpp>

#include "vislabel/consensus.hpp"
#include "vislabel/engine.hpp"
#include "vislabel/error.hpp"
#include "vislabel/hierarchy.hpp"
#include "vislabel/ingest.hpp"

namespace vislabel {

struct CampaignSettings {
  Protocol protocol = Protocol::MethodC;
  std::size_t task_size = kDefaultTaskSize;
  std::size_t replication = kDefaultReplication;
  std::size_t escalation_cap = kDefaultEscalationCap;
  std::int64_t claim_timeout_ms = 60 * 60 * 1000;
  bool operator==(const CampaignSettings&) const = default;
};

struct CampaignCreated {
  std::string campaign_id;
  CampaignSettings settings;
  json hierarchy;
  std::vector<ImageRecord> images;
  bool operator==(const CampaignCreated&) const = default;
};

struct AnnotatorRegistered {
  std::string annotator_id;
  std::string token;
  bool operator==(const AnnotatorRegistered&) const = default;
};

// `escalation_images` is non-empty exactly when the claim creates a new
// escalation task.
struct TaskClaimed {
  std::string annotator_id;
  std::string task_id;
  std::vector<std::string> escalation_images;
  bool operator==(const TaskClaimed&) const = default;
};

struct SessionStarted {
  std::string session_id;
  std::string annotator_id;
  std::string task_id;
  std::string image_id;
  bool operator==(const SessionStarted&) const = default;
};

struct QuestionAsked {
  std::string session_id;
  std::uint32_t sequence_no = 0;
  std::optional<ConceptId> subject;
  bool operator==(const QuestionAsked&) const = default;
};

struct AnswerGiven {
  std::string session_id;
  std::uint32_t sequence_no = 0;
  Answer answer;
  bool operator==(const AnswerGiven&) const = default;
};

struct SessionFinished {
  std::string session_id;
  LabelKey outcome;
  std::uint32_t question_count = 0;
  bool operator==(const SessionFinished&) const = default;
};

struct TaskCompleted {
  std::string annotator_id;
  std::string task_id;
  std::string completion_code;
  bool operator==(const TaskCompleted&) const = default;
};

struct TaskExpired {
  std::string annotator_id;
  std::string task_id;
  bool operator==(const TaskExpired&) const = default;
};

// kind is Final or Unresolved.
struct ConsensusReached {
  std::string image_id;
  ConsensusKind kind = ConsensusKind::Final;
  std::optional<LabelKey> label;
  std::map<std::string, std::size_t> tally;
  bool operator==(const ConsensusReached&) const = default;
};

struct EscalationOpened {
  std::string image_id;
  std::uint32_t round = 1;
  bool operator==(const EscalationOpened&) const = default;
};

using EventBody =
    std::variant<CampaignCreated, AnnotatorRegistered, TaskClaimed, SessionStarted, QuestionAsked,
                 AnswerGiven, SessionFinished, TaskCompleted, TaskExpired, ConsensusReached,
                 EscalationOpened>;

struct Event {
  std::uint64_t seq = 0;
  std::int64_t timestamp = 0;
  EventBody body;
  bool operator==(const Event&) const = default;
};

inline std::string_view event_type(const EventBody& body) {
  static constexpr std::string_view names[] = {
      "CampaignCreated", "AnnotatorRegistered", "TaskClaimed",     "SessionStarted",
      "QuestionAsked",   "AnswerGiven",         "SessionFinished", "TaskCompleted",
      "TaskExpired",     "ConsensusReached",    "EscalationOpened"};
  return names[body.index()];
}

// Records written directly on behalf of a client request. The remaining
// kinds are consequences appended in the same batch.
inline bool is_command(const EventBody& body) {
  return std::holds_alternative<CampaignCreated>(body) ||
         std::holds_alternative<AnnotatorRegistered>(body) ||
         std::holds_alternative<TaskClaimed>(body) ||
         std::holds_alternative<SessionStarted>(body) ||
         std::holds_alternative<AnswerGiven>(body) || std::holds_alternative<TaskExpired>(body);
}

// ---- JSON codec ------------------------------------------------------------

inline json answer_to_json(const Answer& a) {
  json j = json::object();
  j["kind"] = std::string(to_string(a.kind));
  if (a.choice) j["choice"] = a.choice->str();
  return j;
}

inline Answer answer_from_json(const json& j) {
  if (!j.is_object() || !j.contains("kind") || !j["kind"].is_string())
    throw ParseError("answer", "answer must be an object with a string \"kind\"");
  auto kind = j["kind"].get<std::string>();
  if (kind == "Yes") return Answer::yes();
  if (kind == "No") return Answer::no();
  if (kind == "NoneOfThese") return Answer::none_of_these();
  if (kind == "Choice") {
    if (!j.contains("choice") || !j["choice"].is_string())
      throw ParseError("answer/choice", "Choice answers need a \"choice\" concept id");
    return Answer::pick(ConceptId::parse(j["choice"].get<std::string>()));
  }
  throw ParseError("answer/kind", "unknown answer kind \"" + kind + "\"");
}

inline json label_key_to_json(const LabelKey& k) {
  json j = json::object();
  j["kind"] = std::string(to_string(k.kind));
  j["label"] = k.label ? json(k.label->str()) : json(nullptr);
  return j;
}

inline LabelKey label_key_from_json(const json& j) {
  LabelKey k;
  k.kind = parse_outcome_kind(j.at("kind").get<std::string>());
  if (j.contains("label") && !j["label"].is_null())
    k.label = ConceptId::parse(j["label"].get<std::string>());
  return k;
}

inline json settings_to_json(const CampaignSettings& s) {
  return json{{"protocol", std::string(to_string(s.protocol))},
              {"task_size", s.task_size},
              {"replication", s.replication},
              {"escalation_cap", s.escalation_cap},
              {"claim_timeout_ms", s.claim_timeout_ms}};
}

inline CampaignSettings settings_from_json(const json& j) {
  CampaignSettings s;
  s.protocol = parse_protocol(j.at("protocol").get<std::string>());
  s.task_size = j.at("task_size").get<std::size_t>();
  s.replication = j.at("replication").get<std::size_t>();
  s.escalation_cap = j.at("escalation_cap").get<std::size_t>();
  s.claim_timeout_ms = j.at("claim_timeout_ms").get<std::int64_t>();
  return s;
}

namespace detail {

struct BodyEncoder {
  json& j;
  void operator()(const CampaignCreated& e) const {
    j["campaign_id"] = e.campaign_id;
    j["settings"] = settings_to_json(e.settings);
    j["hierarchy"] = e.hierarchy;
    json images = json::array();
    for (const auto& r : e.images) images.push_back(image_record_to_json(r));
    j["images"] = std::move(images);
  }
  void operator()(const AnnotatorRegistered& e) const {
    j["annotator_id"] = e.annotator_id;
    j["token"] = e.token;
  }
  void operator()(const TaskClaimed& e) const {
    j["annotator_id"] = e.annotator_id;
    j["task_id"] = e.task_id;
    if (!e.escalation_images.empty()) j["escalation_images"] = e.escalation_images;
  }
  void operator()(const SessionStarted& e) const {
    j["session_id"] = e.session_id;
    j["annotator_id"] = e.annotator_id;
    j["task_id"] = e.task_id;
    j["image_id"] = e.image_id;
  }
  void operator()(const QuestionAsked& e) const {
    j["session_id"] = e.session_id;
    j["sequence_no"] = e.sequence_no;
    j["subject"] = e.subject ? json(e.subject->str()) : json(nullptr);
  }
  void operator()(const AnswerGiven& e) const {
    j["session_id"] = e.session_id;
    j["sequence_no"] = e.sequence_no;
    j["answer"] = answer_to_json(e.answer);
  }
  void operator()(const SessionFinished& e) const {
    j["session_id"] = e.session_id;
    j["outcome"] = label_key_to_json(e.outcome);
    j["question_count"] = e.question_count;
  }
  void operator()(const TaskCompleted& e) const {
    j["annotator_id"] = e.annotator_id;
    j["task_id"] = e.task_id;
    j["completion_code"] = e.completion_code;
  }
  void operator()(const TaskExpired& e) const {
    j["annotator_id"] = e.annotator_id;
    j["task_id"] = e.task_id;
  }
  void operator()(const ConsensusReached& e) const {
    j["image_id"] = e.image_id;
    j["result"] = std::string(to_string(e.kind));
    j["label"] = e.label ? label_key_to_json(*e.label) : json(nullptr);
    json tally = json::object();
    for (const auto& [k, n] : e.tally) tally[k] = n;
    j["tally"] = std::move(tally);
  }
  void operator()(const EscalationOpened& e) const {
    j["image_id"] = e.image_id;
    j["round"] = e.round;
  }
};

inline std::string str_field(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || !it->is_string())
    throw ParseError(std::string("event/") + key, "missing string field");
  return it->get<std::string>();
}

inline EventBody decode_body(const std::string& type, const json& j) {
  if (type == "CampaignCreated") {
    CampaignCreated e{str_field(j, "campaign_id"), settings_from_json(j.at("settings")),
                      j.at("hierarchy"), {}};
    for (const auto& r : j.at("images")) e.images.push_back(image_record_from_json(r));
    return e;
  }
  if (type == "AnnotatorRegistered")
    return AnnotatorRegistered{str_field(j, "annotator_id"), str_field(j, "token")};
  if (type == "TaskClaimed") {
    TaskClaimed e{str_field(j, "annotator_id"), str_field(j, "task_id"), {}};
    if (j.contains("escalation_images"))
      e.escalation_images = j["escalation_images"].get<std::vector<std::string>>();
    return e;
  }
  if (type == "SessionStarted")
    return SessionStarted{str_field(j, "session_id"), str_field(j, "annotator_id"),
                          str_field(j, "task_id"), str_field(j, "image_id")};
  if (type == "QuestionAsked") {
    QuestionAsked e{str_field(j, "session_id"), j.at("sequence_no").get<std::uint32_t>(), {}};
    if (!j.at("subject").is_null()) e.subject = ConceptId::parse(str_field(j, "subject"));
    return e;
  }
  if (type == "AnswerGiven")
    return AnswerGiven{str_field(j, "session_id"), j.at("sequence_no").get<std::uint32_t>(),
                       answer_from_json(j.at("answer"))};
  if (type == "SessionFinished")
    return SessionFinished{str_field(j, "session_id"), label_key_from_json(j.at("outcome")),
                           j.at("question_count").get<std::uint32_t>()};
  if (type == "TaskCompleted")
    return TaskCompleted{str_field(j, "annotator_id"), str_field(j, "task_id"),
                         str_field(j, "completion_code")};
  if (type == "TaskExpired")
    return TaskExpired{str_field(j, "annotator_id"), str_field(j, "task_id")};
  if (type == "ConsensusReached") {
    ConsensusReached e;
    e.image_id = str_field(j, "image_id");
    auto result = str_field(j, "result");
    if (result == "Final") e.kind = ConsensusKind::Final;
    else if (result == "Unresolved") e.kind = ConsensusKind::Unresolved;
    else throw ParseError("event/result", "unexpected consensus result \"" + result + "\"");
    if (!j.at("label").is_null()) e.label = label_key_from_json(j["label"]);
    for (const auto& [k, n] : j.at("tally").items()) e.tally[k] = n.get<std::size_t>();
    return e;
  }
  if (type == "EscalationOpened")
    return EscalationOpened{str_field(j, "image_id"), j.at("round").get<std::uint32_t>()};
  throw ParseError("event/type", "unknown event type \"" + type + "\"");
}

}  // namespace detail

inline json event_to_json(const Event& e) {
  json j = json::object();
  j["seq"] = e.seq;
  j["ts"] = e.timestamp;
  j["type"] = std::string(event_type(e.body));
  std::visit(detail::BodyEncoder{j}, e.body);
  return j;
}

inline Event event_from_json(const json& j) {
  try {
    Event e;
    e.seq = j.at("seq").get<std::uint64_t>();
    e.timestamp = j.at("ts").get<std::int64_t>();
    e.body = detail::decode_body(detail::str_field(j, "type"), j);
    return e;
  } catch (const json::exception& ex) {
    throw ParseError("event", ex.what());
  }
}

}  // namespace vislabel
