#pragma once

#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <random>
#include <shared_mutex>
#include <sstream>
#include <string>
#include <vector>

#include "vislabel/campaign.hpp"
#include "vislabel/engine.hpp"
#include "vislabel/error.hpp"
#include "vislabel/event_log.hpp"
#include "vislabel/export.hpp"
#include "vislabel/hierarchy.hpp"
#include "vislabel/ingest.hpp"

namespace vislabel {

// ---- Wire shapes -------------------------------------------------------------

inline json question_to_json(const Question& q, const Hierarchy& h) {
  json j = json::object();
  j["type"] = "question";
  j["sequence_no"] = q.sequence_no;
  j["kind"] = q.kind == QuestionKind::FlatChoice ? "choice" : "yes_no";
  j["subject"] = q.subject ? json(q.subject->str()) : json(nullptr);
  j["text"] = q.text();
  json prompt = json::object();
  prompt["name"] = q.prompt_name;
  if (!q.prompt_genus.empty()) prompt["genus"] = q.prompt_genus;
  if (!q.prompt_differentia.empty()) prompt["differentia"] = q.prompt_differentia;
  j["prompt"] = std::move(prompt);
  json choices = json::array();
  for (const auto& c : q.choices) choices.push_back(json{{"id", c.id.str()}, {"name", c.name}});
  j["choices"] = std::move(choices);
  j["offers_none_of_these"] = q.offers_none_of_these;
  j["question_upper_bound"] = question_upper_bound(h);
  return j;
}

inline json outcome_to_json(const LabelOutcome& o) {
  json j = json::object();
  j["type"] = "outcome";
  j["kind"] = std::string(to_string(o.kind));
  j["label"] = o.label ? json(o.label->str()) : json(nullptr);
  json path = json::array();
  for (const auto& t : o.label_path_texts)
    path.push_back(json{{"name", t.name}, {"genus", t.genus}, {"differentia", t.differentia}});
  j["label_path"] = std::move(path);
  j["question_count"] = o.question_count;
  return j;
}

inline json step_to_json(const Step& s, const Hierarchy& h) {
  if (const auto* q = std::get_if<Question>(&s)) return question_to_json(*q, h);
  return outcome_to_json(std::get<LabelOutcome>(s));
}

inline json error_body(const Error& e) {
  json j = json::object();
  j["code"] = e.code();
  j["message"] = std::string(e.what());
  if (const auto* v = dynamic_cast<const ValidationError*>(&e)) {
    json list = json::array();
    for (const auto& x : v->violations())
      list.push_back(json{{"code", x.code}, {"locus", x.locus}, {"message", x.message}});
    j["violations"] = std::move(list);
  }
  return j;
}

inline int status_for(const std::string& code) {
  static const std::map<std::string, int> table = {
      {"not_found", 404},          {"parse_error", 400},         {"validation_error", 400},
      {"config_error", 400},       {"protocol_error", 422},      {"insufficient_data", 422},
      {"perfect_homogeneity", 422}, {"state_error", 409},        {"session_finished", 409},
      {"stale_sequence", 409},     {"no_claim", 409},            {"conflict", 409},
      {"integrity_error", 409},    {"precondition_error", 409},  {"replay_error", 409},
      {"unauthorized", 401}};
  auto it = table.find(code);
  return it == table.end() ? 500 : it->second;
}

// ---- Campaign config ---------------------------------------------------------

namespace detail {

inline std::string read_file(const std::filesystem::path& path, const char* what) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read " + std::string(what) + " file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace detail

// {"hierarchy": path | document, "manifest": path | "images": [records],
//  "protocol", "task_size", "replication", "escalation_cap", "claim_timeout_ms"}
// Relative paths resolve against `base_dir`.
inline CampaignCreated campaign_from_config(const json& cfg, const std::filesystem::path& base_dir) {
  if (!cfg.is_object()) throw ParseError("config", "campaign config must be an object");
  CampaignCreated c;
  auto resolve = [&](const std::string& p) {
    std::filesystem::path path(p);
    return path.is_absolute() ? path : base_dir / path;
  };
  if (!cfg.contains("hierarchy")) throw ConfigError("campaign config needs \"hierarchy\"");
  const auto& hj = cfg["hierarchy"];
  Hierarchy h = hj.is_string()
                    ? parse_hierarchy(detail::read_file(resolve(hj.get<std::string>()), "hierarchy"))
                    : hierarchy_from_json(hj);
  if (h.empty()) throw ConfigError("hierarchy has no categories");
  c.hierarchy = hierarchy_to_json(h);

  if (cfg.contains("manifest")) {
    c.images = ingest_manifest(
        detail::read_file(resolve(cfg["manifest"].get<std::string>()), "manifest"));
  } else if (cfg.contains("images")) {
    std::vector<Violation> violations;
    std::size_t i = 0;
    for (const auto& r : cfg["images"])
      c.images.push_back(image_record_from_json(r, "images/" + std::to_string(i++), violations));
    if (!violations.empty()) throw ValidationError(std::move(violations));
  } else {
    throw ConfigError("campaign config needs \"manifest\" or \"images\"");
  }

  try {
    CampaignSettings& s = c.settings;
    s.protocol = parse_protocol(cfg.value("protocol", std::string("C")));
    s.task_size = cfg.value("task_size", s.task_size);
    s.replication = cfg.value("replication", s.replication);
    s.escalation_cap = cfg.value("escalation_cap", s.escalation_cap);
    s.claim_timeout_ms = cfg.value("claim_timeout_ms", s.claim_timeout_ms);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("campaign settings: ") + e.what());
  }
  return c;
}

// ---- Service -----------------------------------------------------------------

struct Request {
  std::string method;
  std::string path;
  std::string body;
  std::string authorization;  // raw Authorization header
};

struct Response {
  int status = 200;
  std::string body;
  std::string content_type = "application/json";

  json as_json() const { return body.empty() ? json(nullptr) : json::parse(body); }
};

struct ServiceOptions {
  std::filesystem::path data_dir;  // empty: in-memory only
  std::filesystem::path base_dir = ".";
  Clock clock;                     // default: wall clock in ms
  std::function<std::string(const std::string& campaign, const std::string& annotator)>
      token_source;                // default: random
  // Completion callback, the hook for a crowd platform's completion webhook.
  std::function<void(const std::string& campaign, const std::string& annotator,
                     const std::string& task, const std::string& code)>
      on_task_completed;
};

class AnnotationService {
 public:
  explicit AnnotationService(ServiceOptions opts = {}) : opts_(std::move(opts)) {
    if (!opts_.clock)
      opts_.clock = [] {
        return std::chrono::duration_cast<std::chrono::milliseconds>(
                   std::chrono::system_clock::now().time_since_epoch())
            .count();
      };
    if (!opts_.token_source)
      opts_.token_source = [](const std::string&, const std::string&) {
        std::random_device rd;
        static constexpr char hex[] = "0123456789abcdef";
        std::string t;
        for (int i = 0; i < 32; ++i) t += hex[rd() & 0xF];
        return t;
      };
    if (!opts_.data_dir.empty()) load();
  }

  Response handle(const Request& req) {
    try {
      return route(req);
    } catch (const Error& e) {
      return reply(status_for(e.code()), error_body(e));
    } catch (const json::exception& e) {
      return reply(400, json{{"code", "parse_error"}, {"message", e.what()}});
    } catch (const std::exception& e) {
      return reply(500, json{{"code", "internal"}, {"message", e.what()}});
    }
  }

  std::vector<std::string> campaign_ids() const {
    std::shared_lock lock(map_mutex_);
    std::vector<std::string> out;
    for (const auto& [id, e] : campaigns_) out.push_back(id);
    return out;
  }

  // Snapshot of one campaign's log, for tests and tooling.
  EventLog log_snapshot(const std::string& campaign_id) {
    auto& e = entry(campaign_id);
    std::lock_guard lock(e.mutex);
    return e.campaign->log().detached();
  }

  std::string create_campaign(CampaignCreated def) {
    std::unique_lock lock(map_mutex_);
    auto id = "c-" + std::to_string(next_campaign_++);
    def.campaign_id = id;
    EventLog log;
    if (!opts_.data_dir.empty()) {
      auto path = log_path(id);
      if (std::filesystem::exists(path))
        throw StateError("log for campaign " + id + " already exists", "conflict");
      // Validate before creating the file.
      CampaignState probe;
      probe.apply(Event{1, 0, def});
      log = EventLog::open(path);
    }
    auto e = std::make_unique<Entry>();
    e->campaign = std::make_unique<Campaign>(Campaign::create(std::move(def), std::move(log),
                                                              opts_.clock));
    campaigns_.emplace(id, std::move(e));
    return id;
  }

 private:
  struct Entry {
    std::mutex mutex;
    std::unique_ptr<Campaign> campaign;
  };

  std::filesystem::path log_path(const std::string& id) const {
    return opts_.data_dir / (id + ".events.jsonl");
  }

  void load() {
    std::filesystem::create_directories(opts_.data_dir);
    for (const auto& f : std::filesystem::directory_iterator(opts_.data_dir)) {
      auto name = f.path().filename().string();
      static constexpr std::string_view suffix = ".events.jsonl";
      if (name.size() <= suffix.size() || name.compare(name.size() - suffix.size(), suffix.size(),
                                                       suffix) != 0)
        continue;
      auto id = name.substr(0, name.size() - suffix.size());
      auto e = std::make_unique<Entry>();
      e->campaign = std::make_unique<Campaign>(EventLog::open(f.path()), opts_.clock);
      if (id.rfind("c-", 0) == 0) {
        try {
          next_campaign_ = std::max(next_campaign_, std::stoul(id.substr(2)) + 1);
        } catch (const std::exception&) {
        }
      }
      campaigns_.emplace(id, std::move(e));
    }
  }

  Entry& entry(const std::string& id) {
    std::shared_lock lock(map_mutex_);
    auto it = campaigns_.find(id);
    if (it == campaigns_.end()) throw NotFoundError("no campaign " + id);
    return *it->second;
  }

  static Response reply(int status, const json& body) { return {status, body.dump(), "application/json"}; }

  static json parse_body(const Request& req) {
    if (req.body.empty()) return json::object();
    return detail::parse_json_text(req.body);
  }

  // Resolves the bearer token to an annotator of `c`.
  static std::string authenticate(const Request& req, const CampaignState& s) {
    static constexpr std::string_view prefix = "Bearer ";
    if (req.authorization.rfind(prefix, 0) != 0)
      throw UnauthorizedError("missing bearer token");
    auto token = req.authorization.substr(prefix.size());
    for (const auto& [id, a] : s.annotators())
      if (!token.empty() && a.token == token) return id;
    throw UnauthorizedError("unknown token");
  }

  static std::vector<std::string> split_path(const std::string& path) {
    std::vector<std::string> parts;
    std::string cur;
    for (char c : path.substr(0, path.find('?'))) {
      if (c == '/') {
        if (!cur.empty()) parts.push_back(std::move(cur));
        cur.clear();
      } else {
        cur += c;
      }
    }
    if (!cur.empty()) parts.push_back(std::move(cur));
    return parts;
  }

  static json task_to_json(const Campaign::Claim& c, const CampaignState& s) {
    const auto& a = *s.assignment(c.assignment.annotator_id, c.task.task_id);
    json images = json::array();
    for (const auto& id : c.task.image_ids) {
      json img = json::object();
      img["image_id"] = id;
      img["uri"] = s.image(id).uri;
      auto sit = a.sessions.find(id);
      img["session_id"] = sit == a.sessions.end() ? json(nullptr) : json(sit->second);
      img["done"] = a.outcomes.count(id) > 0;
      images.push_back(std::move(img));
    }
    json j = json::object();
    j["task_id"] = c.task.task_id;
    j["protocol"] = std::string(to_string(c.task.protocol));
    j["resumed"] = c.resumed;
    j["images"] = std::move(images);
    return j;
  }

  Response route(const Request& req) {
    auto p = split_path(req.path);
    const bool get = req.method == "GET", post = req.method == "POST";
    if (p.empty() || p[0] != "v1") throw NotFoundError("no route " + req.path);
    if (p.size() == 2 && p[1] == "health" && get) return reply(200, json{{"status", "ok"}});
    if (p.size() < 2 || p[1] != "campaigns") throw NotFoundError("no route " + req.path);

    if (p.size() == 2 && post) {
      auto id = create_campaign(campaign_from_config(parse_body(req), opts_.base_dir));
      return reply(201, json{{"campaign_id", id}});
    }
    if (p.size() == 2 && get) {
      json ids = json::array();
      for (const auto& id : campaign_ids()) ids.push_back(id);
      return reply(200, json{{"campaigns", std::move(ids)}});
    }

    if (p.size() < 3) throw NotFoundError("no route " + req.method + " " + req.path);
    auto& e = entry(p[2]);
    std::lock_guard lock(e.mutex);
    auto& c = *e.campaign;
    const auto& s = c.state();
    auto rest = std::vector<std::string>(p.begin() + 3, p.end());

    if (rest.empty() && get) {
      json j = json::object();
      j["campaign_id"] = s.campaign_id();
      j["settings"] = settings_to_json(s.settings());
      j["progress"] = progress_to_json(campaign_progress(s));
      return reply(200, j);
    }
    if (rest.size() == 1 && rest[0] == "hierarchy" && get)
      return reply(200, hierarchy_to_json(s.hierarchy()));
    if (rest.size() == 1 && rest[0] == "metrics" && get)
      return reply(200, metrics_to_json(campaign_metrics(s)));
    if (rest.size() == 1 && rest[0] == "export" && get)
      return {200, serialize_export(export_dataset(s, s.hierarchy())), "application/x-ndjson"};
    if (rest.size() == 1 && rest[0] == "annotators" && post) {
      auto body = parse_body(req);
      if (!body.contains("annotator_id") || !body["annotator_id"].is_string())
        throw ParseError("annotator_id", "string field required");
      auto id = body["annotator_id"].get<std::string>();
      if (id.empty()) throw ParseError("annotator_id", "must not be empty");
      auto token = opts_.token_source(s.campaign_id(), id);
      c.register_annotator(id, token);
      return reply(201, json{{"annotator_id", id}, {"token", token}});
    }
    if (rest.size() == 1 && rest[0] == "claim" && post) {
      auto who = authenticate(req, s);
      auto claim = c.claim(who);
      if (!claim) return {204, "", "application/json"};
      return reply(200, task_to_json(*claim, c.state()));
    }
    if (rest.size() == 1 && rest[0] == "expire" && post)
      return reply(200, json{{"expired", c.expire_stale(c.now())}});

    if (rest.size() == 3 && rest[0] == "tasks") {
      auto who = authenticate(req, s);
      const auto& task = rest[1];
      if (rest[2] == "abandon" && post) {
        c.abandon(who, task);
        return reply(200, json{{"task_id", task}, {"status", "Expired"}});
      }
      if (rest[2] == "completion" && get) {
        const auto* a = s.assignment(who, task);
        if (!a) throw NotFoundError(who + " has no assignment " + task);
        json j = json::object();
        j["task_id"] = task;
        j["status"] = std::string(to_string(a->assignment.status));
        j["completion_code"] = a->completion_code.empty() ? json(nullptr) : json(a->completion_code);
        return reply(200, j);
      }
    }
    if (rest.size() == 5 && rest[0] == "tasks" && rest[2] == "images" && rest[4] == "session" &&
        post) {
      auto who = authenticate(req, s);
      auto handle = c.open_session(who, rest[1], rest[3]);
      json j = step_to_json(handle.step, s.hierarchy());
      j["session_id"] = handle.session_id;
      return reply(200, j);
    }
    if (rest.size() >= 2 && rest[0] == "sessions") {
      auto who = authenticate(req, s);
      const auto& sid = rest[1];
      const auto& rec = s.session(sid);
      if (rec.annotator_id != who) throw UnauthorizedError("session belongs to another annotator");
      if (rest.size() == 2 && get) {
        json j = step_to_json(c.current(sid), s.hierarchy());
        j["session_id"] = sid;
        return reply(200, j);
      }
      if (rest.size() == 3 && rest[2] == "answers" && post) {
        auto body = parse_body(req);
        if (!body.contains("sequence_no") || !body["sequence_no"].is_number_unsigned())
          throw ParseError("sequence_no", "non-negative integer field required");
        if (!body.contains("answer")) throw ParseError("answer", "field required");
        auto seq = body["sequence_no"].get<std::uint32_t>();
        auto answer = answer_from_json(body["answer"]);
        const auto task = rec.task_id;
        auto before = s.assignment(who, task)->assignment.status;
        auto step = c.answer(sid, seq, answer);
        const auto& a = *c.state().assignment(who, task);
        json j = step_to_json(step, c.state().hierarchy());
        j["session_id"] = sid;
        if (std::holds_alternative<LabelOutcome>(step)) {
          j["task_status"] = std::string(to_string(a.assignment.status));
          if (a.assignment.status == AssignmentStatus::Completed)
            j["completion_code"] = a.completion_code;
        }
        if (before != AssignmentStatus::Completed &&
            a.assignment.status == AssignmentStatus::Completed && opts_.on_task_completed)
          opts_.on_task_completed(s.campaign_id(), who, task, a.completion_code);
        return reply(200, j);
      }
    }
    throw NotFoundError("no route " + req.method + " " + req.path);
  }

  ServiceOptions opts_;
  mutable std::shared_mutex map_mutex_;
  std::map<std::string, std::unique_ptr<Entry>> campaigns_;
  std::size_t next_campaign_ = 1;
};

}  // namespace vislabel
