#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "vislabel/consensus.hpp"
#include "vislabel/engine.hpp"
#include "vislabel/error.hpp"
#include "vislabel/event_log.hpp"
#include "vislabel/events.hpp"
#include "vislabel/hierarchy.hpp"
#include "vislabel/ingest.hpp"

namespace vislabel {

enum class TaskKind { Regular, Escalation };
enum class AssignmentStatus { Claimed, Completed, Expired };
enum class ImageStatus { Pending, Escalated, Final, Unresolved };

inline std::string_view to_string(AssignmentStatus s) {
  switch (s) {
    case AssignmentStatus::Claimed: return "Claimed";
    case AssignmentStatus::Completed: return "Completed";
    case AssignmentStatus::Expired: return "Expired";
  }
  return "?";
}

inline std::string_view to_string(ImageStatus s) {
  switch (s) {
    case ImageStatus::Pending: return "Pending";
    case ImageStatus::Escalated: return "Escalated";
    case ImageStatus::Final: return "Final";
    case ImageStatus::Unresolved: return "Unresolved";
  }
  return "?";
}

struct Assignment {
  std::string annotator_id;
  std::string task_id;
  AssignmentStatus status = AssignmentStatus::Claimed;
  bool operator==(const Assignment&) const = default;
};

struct TaskState {
  Task task;
  TaskKind kind = TaskKind::Regular;
  std::size_t passes_needed = 0;
  std::size_t completed_passes = 0;
  std::size_t in_flight = 0;
  bool operator==(const TaskState&) const = default;
};

struct AssignmentState {
  Assignment assignment;
  std::int64_t claimed_at = 0;
  std::map<std::string, std::string> sessions;     // image -> session id
  std::map<std::string, LabelOutcome> outcomes;    // finished, not yet committed
  std::string completion_code;
  bool operator==(const AssignmentState&) const = default;
};

struct AnnotatorState {
  std::string token;
  std::set<std::string> seen_images;
  std::optional<std::string> active_task;
  std::size_t completed_tasks = 0;
  std::size_t votes = 0;
  bool operator==(const AnnotatorState&) const = default;
};

struct SessionRecord {
  std::string annotator_id;
  std::string task_id;
  AnnotationSession session;
  std::uint32_t asked = 0;
  bool finish_logged = false;
  bool operator==(const SessionRecord&) const = default;
};

struct ImageState {
  std::size_t order = 0;
  VoteSet votes;
  ImageStatus status = ImageStatus::Pending;
  std::optional<LabelOutcome> final_label;
  std::uint32_t escalation_rounds = 0;
  bool in_pool = false;
  bool operator==(const ImageState&) const = default;
};

// Everything derivable from a campaign's event log. Mutated only through
// apply(); each handler validates before it mutates, so a rejected event
// leaves the state untouched.
class CampaignState {
 public:
  bool created() const noexcept { return created_; }
  const std::string& campaign_id() const noexcept { return campaign_id_; }
  const CampaignSettings& settings() const noexcept { return settings_; }
  const Hierarchy& hierarchy() const noexcept { return hierarchy_; }
  const std::vector<ImageRecord>& images() const noexcept { return images_; }
  const std::vector<std::string>& task_order() const noexcept { return task_order_; }
  const std::map<std::string, TaskState>& tasks() const noexcept { return tasks_; }
  const std::map<std::string, AnnotatorState>& annotators() const noexcept { return annotators_; }
  const std::map<std::string, SessionRecord>& sessions() const noexcept { return sessions_; }
  const std::map<std::string, ImageState>& image_states() const noexcept { return image_states_; }
  const std::map<std::pair<std::string, std::string>, AssignmentState>& assignments() const noexcept {
    return assignments_;
  }
  const std::set<std::size_t>& escalation_pool() const noexcept { return pool_; }
  std::uint64_t last_seq() const noexcept { return last_seq_; }
  std::size_t escalation_task_count() const noexcept { return escalation_tasks_; }
  std::size_t sessions_started() const noexcept { return sessions_.size(); }

  const ImageRecord& image(const std::string& id) const {
    return images_[image_state(id).order];
  }

  const ImageState& image_state(const std::string& id) const {
    auto it = image_states_.find(id);
    if (it == image_states_.end()) throw NotFoundError("unknown image " + id);
    return it->second;
  }

  const TaskState& task(const std::string& id) const {
    auto it = tasks_.find(id);
    if (it == tasks_.end()) throw NotFoundError("unknown task " + id);
    return it->second;
  }

  const AnnotatorState& annotator(const std::string& id) const {
    auto it = annotators_.find(id);
    if (it == annotators_.end()) throw NotFoundError("unknown annotator " + id);
    return it->second;
  }

  const SessionRecord& session(const std::string& id) const {
    auto it = sessions_.find(id);
    if (it == sessions_.end()) throw NotFoundError("unknown session " + id);
    return it->second;
  }

  const AssignmentState* assignment(const std::string& annotator, const std::string& task) const {
    auto it = assignments_.find({annotator, task});
    return it == assignments_.end() ? nullptr : &it->second;
  }

  const AssignmentState* active_assignment(const std::string& annotator_id) const {
    const auto& a = annotator(annotator_id);
    return a.active_task ? assignment(annotator_id, *a.active_task) : nullptr;
  }

  // True when every image is Final or Unresolved.
  bool complete() const {
    return std::all_of(image_states_.begin(), image_states_.end(), [](const auto& kv) {
      return kv.second.status == ImageStatus::Final || kv.second.status == ImageStatus::Unresolved;
    });
  }

  void apply(const Event& e) {
    if (e.seq <= last_seq_)
      throw IntegrityError("event " + std::to_string(e.seq) + " is out of order");
    if (!created_ && !std::holds_alternative<CampaignCreated>(e.body))
      throw IntegrityError("first event must be CampaignCreated");
    std::visit([&](const auto& body) { on(body, e.timestamp); }, e.body);
    last_seq_ = e.seq;
  }

  friend bool operator==(const CampaignState&, const CampaignState&) = default;

 private:
  SessionRecord& session_mut(const std::string& id) {
    auto it = sessions_.find(id);
    if (it == sessions_.end()) throw IntegrityError("unknown session " + id);
    return it->second;
  }

  AnnotatorState& annotator_mut(const std::string& id) {
    auto it = annotators_.find(id);
    if (it == annotators_.end()) throw IntegrityError("unknown annotator " + id);
    return it->second;
  }

  AssignmentState& claimed_assignment(const std::string& annotator, const std::string& task) {
    auto it = assignments_.find({annotator, task});
    if (it == assignments_.end() || it->second.assignment.status != AssignmentStatus::Claimed)
      throw IntegrityError("annotator " + annotator + " holds no claim on task " + task);
    return it->second;
  }

  void on(const CampaignCreated& e, std::int64_t) {
    if (created_) throw IntegrityError("campaign already created");
    const auto& s = e.settings;
    if (s.replication < 2) throw ConfigError("replication must be at least 2");
    if (s.escalation_cap < s.replication)
      throw ConfigError("escalation cap must be at least the replication target");
    auto h = hierarchy_from_json(e.hierarchy);
    std::vector<std::string> ids;
    for (const auto& r : e.images)
      if (!r.excluded) ids.push_back(r.image_id);
    auto tasks = build_tasks(ids, s.task_size, s.protocol);

    created_ = true;
    campaign_id_ = e.campaign_id;
    settings_ = s;
    hierarchy_ = std::move(h);
    for (const auto& r : e.images) {
      if (r.excluded) continue;
      image_states_[r.image_id] = ImageState{images_.size(), {r.image_id, {}, s.replication}, ImageStatus::Pending, std::nullopt, 0, false};
      images_.push_back(r);
    }
    for (auto& t : tasks) {
      task_order_.push_back(t.task_id);
      auto id = t.task_id;
      tasks_.emplace(id, TaskState{std::move(t), TaskKind::Regular, s.replication, 0, 0});
    }
  }

  void on(const AnnotatorRegistered& e, std::int64_t) {
    if (e.annotator_id.empty()) throw IntegrityError("empty annotator id");
    if (annotators_.count(e.annotator_id))
      throw IntegrityError("annotator " + e.annotator_id + " already registered");
    annotators_[e.annotator_id].token = e.token;
  }

  void on(const TaskClaimed& e, std::int64_t ts) {
    auto& who = annotator_mut(e.annotator_id);
    if (who.active_task) throw IntegrityError(e.annotator_id + " already holds a claim");
    if (assignments_.count({e.annotator_id, e.task_id}))
      throw IntegrityError(e.annotator_id + " was already assigned " + e.task_id);
    std::vector<std::string> images;
    if (!e.escalation_images.empty()) {
      if (tasks_.count(e.task_id)) throw IntegrityError("task " + e.task_id + " already exists");
      for (const auto& img : e.escalation_images) {
        const auto& st = image_state(img);
        if (!st.in_pool) throw IntegrityError("image " + img + " is not awaiting escalation");
      }
      images = e.escalation_images;
    } else {
      auto it = tasks_.find(e.task_id);
      if (it == tasks_.end()) throw IntegrityError("unknown task " + e.task_id);
      const auto& t = it->second;
      if (t.kind != TaskKind::Regular || t.completed_passes + t.in_flight >= t.passes_needed)
        throw IntegrityError("task " + e.task_id + " needs no further passes");
      images = t.task.image_ids;
    }
    for (const auto& img : images)
      if (who.seen_images.count(img))
        throw IntegrityError(e.annotator_id + " has already seen image " + img);

    if (!e.escalation_images.empty()) {
      ++escalation_tasks_;
      for (const auto& img : images) {
        auto& st = image_states_.at(img);
        st.in_pool = false;
        pool_.erase(st.order);
      }
      tasks_.emplace(e.task_id, TaskState{Task{e.task_id, images, settings_.protocol,
                                               settings_.task_size},
                                          TaskKind::Escalation, 1, 0, 0});
      task_order_.push_back(e.task_id);
    }
    ++tasks_.at(e.task_id).in_flight;
    who.seen_images.insert(images.begin(), images.end());
    who.active_task = e.task_id;
    assignments_[{e.annotator_id, e.task_id}] =
        AssignmentState{{e.annotator_id, e.task_id, AssignmentStatus::Claimed}, ts, {}, {}, {}};
  }

  void on(const SessionStarted& e, std::int64_t) {
    if (sessions_.count(e.session_id))
      throw IntegrityError("session " + e.session_id + " already exists");
    auto& a = claimed_assignment(e.annotator_id, e.task_id);
    const auto& images = tasks_.at(e.task_id).task.image_ids;
    if (std::find(images.begin(), images.end(), e.image_id) == images.end())
      throw IntegrityError("image " + e.image_id + " is not part of task " + e.task_id);
    if (a.sessions.count(e.image_id))
      throw IntegrityError(e.annotator_id + " already has a session for " + e.image_id);
    auto started = start_session(hierarchy_, e.image_id, settings_.protocol, e.session_id);
    a.sessions[e.image_id] = e.session_id;
    sessions_.emplace(e.session_id,
                      SessionRecord{e.annotator_id, e.task_id, std::move(started.first), 0, false});
  }

  void on(const QuestionAsked& e, std::int64_t) {
    auto& rec = session_mut(e.session_id);
    const auto& pending = rec.session.pending();
    if (rec.finish_logged || !pending || pending->sequence_no != e.sequence_no ||
        rec.asked + 1 != e.sequence_no || pending->subject != e.subject)
      throw IntegrityError("question " + std::to_string(e.sequence_no) + " of " + e.session_id +
                           " does not match the session state");
    rec.asked = e.sequence_no;
  }

  void on(const AnswerGiven& e, std::int64_t) {
    auto& rec = session_mut(e.session_id);
    claimed_assignment(rec.annotator_id, rec.task_id);
    if (rec.session.finished() || rec.asked != e.sequence_no ||
        rec.session.transcript().size() + 1 != e.sequence_no)
      throw IntegrityError("answer " + std::to_string(e.sequence_no) + " of " + e.session_id +
                           " was not preceded by its question");
    rec.session.submit(e.answer);
  }

  void on(const SessionFinished& e, std::int64_t) {
    auto& rec = session_mut(e.session_id);
    auto& a = claimed_assignment(rec.annotator_id, rec.task_id);
    const auto& out = rec.session.outcome();
    if (rec.finish_logged || !out || out->key() != e.outcome ||
        out->question_count != e.question_count)
      throw IntegrityError("finish record of " + e.session_id + " does not match the session");
    rec.finish_logged = true;
    a.outcomes[rec.session.image_id()] = *out;
  }

  void on(const TaskCompleted& e, std::int64_t) {
    auto& a = claimed_assignment(e.annotator_id, e.task_id);
    auto& t = tasks_.at(e.task_id);
    if (a.outcomes.size() != t.task.image_ids.size())
      throw IntegrityError("task " + e.task_id + " has unfinished images");
    auto& who = annotator_mut(e.annotator_id);
    a.assignment.status = AssignmentStatus::Completed;
    a.completion_code = e.completion_code;
    ++t.completed_passes;
    --t.in_flight;
    who.active_task.reset();
    ++who.completed_tasks;
    for (const auto& img : t.task.image_ids) {
      image_states_.at(img).votes.votes.push_back({e.annotator_id, a.outcomes.at(img)});
      ++who.votes;
    }
  }

  void on(const TaskExpired& e, std::int64_t) {
    auto& a = claimed_assignment(e.annotator_id, e.task_id);
    auto& t = tasks_.at(e.task_id);
    a.assignment.status = AssignmentStatus::Expired;
    a.outcomes.clear();
    --t.in_flight;
    annotator_mut(e.annotator_id).active_task.reset();
    if (t.kind == TaskKind::Escalation) {
      for (const auto& img : t.task.image_ids) {
        auto& st = image_states_.at(img);
        st.in_pool = true;
        pool_.insert(st.order);
      }
    }
  }

  void on(const ConsensusReached& e, std::int64_t) {
    auto it = image_states_.find(e.image_id);
    if (it == image_states_.end()) throw IntegrityError("unknown image " + e.image_id);
    auto& st = it->second;
    if (st.status == ImageStatus::Final || st.status == ImageStatus::Unresolved || st.in_pool ||
        st.votes.votes.size() < settings_.replication)
      throw IntegrityError("image " + e.image_id + " is not ready for consensus");
    auto result = aggregate(st.votes, settings_.escalation_cap);
    std::optional<LabelKey> label;
    if (result.label) label = result.label->key();
    if (result.kind != e.kind || label != e.label)
      throw IntegrityError("consensus record for " + e.image_id + " disagrees with its votes");
    st.status = e.kind == ConsensusKind::Final ? ImageStatus::Final : ImageStatus::Unresolved;
    st.final_label = result.label;
  }

  void on(const EscalationOpened& e, std::int64_t) {
    auto it = image_states_.find(e.image_id);
    if (it == image_states_.end()) throw IntegrityError("unknown image " + e.image_id);
    auto& st = it->second;
    if (st.status == ImageStatus::Final || st.status == ImageStatus::Unresolved || st.in_pool ||
        st.votes.votes.size() < settings_.replication ||
        aggregate(st.votes, settings_.escalation_cap).kind != ConsensusKind::NeedsEscalation ||
        e.round != st.escalation_rounds + 1)
      throw IntegrityError("escalation record for " + e.image_id + " is not warranted");
    st.status = ImageStatus::Escalated;
    st.escalation_rounds = e.round;
    st.in_pool = true;
    pool_.insert(st.order);
  }

  bool created_ = false;
  std::string campaign_id_;
  CampaignSettings settings_;
  Hierarchy hierarchy_;
  std::vector<ImageRecord> images_;
  std::map<std::string, ImageState> image_states_;
  std::vector<std::string> task_order_;
  std::map<std::string, TaskState> tasks_;
  std::map<std::string, AnnotatorState> annotators_;
  std::map<std::pair<std::string, std::string>, AssignmentState> assignments_;
  std::map<std::string, SessionRecord> sessions_;
  std::set<std::size_t> pool_;  // image order indices awaiting an escalation vote
  std::size_t escalation_tasks_ = 0;
  std::uint64_t last_seq_ = 0;
};

// Folds a log into the campaign state it describes.
inline CampaignState replay_state(const EventLog& log) {
  CampaignState state;
  for (const auto& e : log.events()) {
    try {
      state.apply(e);
    } catch (const Error& err) {
      // whatever the cause, a record the state machine refuses means a bad log
      throw IntegrityError("seq " + std::to_string(e.seq) + " (" +
                           std::string(event_type(e.body)) + "): " + err.what());
    }
  }
  return state;
}

struct ClaimDecision {
  std::string task_id;
  std::vector<std::string> escalation_images;  // non-empty: create this escalation task
  bool resumed = false;
};

// Chooses the next task for an annotator: their open claim if any; else an
// escalation task built from pooled images they have not seen; else the
// regular task with the most passes done or in flight that still needs one
// and shares no image with anything they have seen.
inline std::optional<ClaimDecision> assign_next(const CampaignState& state,
                                                const std::string& annotator_id) {
  const auto& who = state.annotator(annotator_id);
  if (who.active_task) return ClaimDecision{*who.active_task, {}, true};

  std::vector<std::string> escalation;
  for (auto order : state.escalation_pool()) {
    const auto& id = state.images()[order].image_id;
    if (!who.seen_images.count(id)) escalation.push_back(id);
    if (escalation.size() == state.settings().task_size) break;
  }
  if (!escalation.empty())
    return ClaimDecision{"e-" + std::to_string(state.escalation_task_count() + 1),
                         std::move(escalation), false};

  const TaskState* best = nullptr;
  for (const auto& id : state.task_order()) {
    const auto& t = state.tasks().at(id);
    if (t.kind != TaskKind::Regular) continue;
    auto progress = t.completed_passes + t.in_flight;
    if (progress >= t.passes_needed) continue;
    if (state.assignment(annotator_id, id)) continue;
    bool seen = std::any_of(t.task.image_ids.begin(), t.task.image_ids.end(),
                            [&](const auto& img) { return who.seen_images.count(img) > 0; });
    if (seen) continue;
    if (!best || progress > best->completed_passes + best->in_flight) best = &t;
  }
  if (!best) return std::nullopt;
  return ClaimDecision{best->task.task_id, {}, false};
}

struct AnnotatorProgress {
  std::size_t completed_tasks = 0;
  std::size_t votes = 0;
  bool operator==(const AnnotatorProgress&) const = default;
};

struct ProgressReport {
  std::size_t images = 0;
  std::size_t final_count = 0;
  std::size_t pending = 0;
  std::size_t escalated = 0;
  std::size_t unresolved = 0;
  std::map<std::string, AnnotatorProgress> annotators;
  bool operator==(const ProgressReport&) const = default;
};

inline ProgressReport campaign_progress(const CampaignState& state) {
  ProgressReport r;
  for (const auto& [id, st] : state.image_states()) {
    ++r.images;
    switch (st.status) {
      case ImageStatus::Final: ++r.final_count; break;
      case ImageStatus::Escalated: ++r.escalated; break;
      case ImageStatus::Unresolved: ++r.unresolved; break;
      case ImageStatus::Pending: ++r.pending; break;
    }
  }
  for (const auto& [id, a] : state.annotators()) r.annotators[id] = {a.completed_tasks, a.votes};
  return r;
}

inline json progress_to_json(const ProgressReport& p) {
  json annotators = json::object();
  for (const auto& [id, a] : p.annotators)
    annotators[id] = json{{"completed_tasks", a.completed_tasks}, {"votes", a.votes}};
  return json{{"images", p.images},         {"final", p.final_count},
              {"pending", p.pending},       {"escalated", p.escalated},
              {"unresolved", p.unresolved}, {"annotators", std::move(annotators)}};
}

inline std::string completion_code(const std::string& campaign, const std::string& task,
                                   const std::string& annotator) {
  std::uint64_t h = 1469598103934665603ull;
  for (char c : campaign + "/" + task + "/" + annotator) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ull;
  }
  static constexpr char hex[] = "0123456789ABCDEF";
  std::string out;
  for (int i = 0; i < 8; ++i) out += hex[(h >> (60 - 4 * i)) & 0xF];
  return out;
}

using Clock = std::function<std::int64_t()>;

struct SessionHandle {
  std::string session_id;
  Step step;
};

// Live campaign: the single writer that turns requests into events. Each
// accepted request appends one command record plus its consequences;
// rejected and repeated requests append nothing.
class Campaign {
 public:
  Campaign(EventLog log, Clock clock) : log_(std::move(log)), clock_(std::move(clock)) {
    state_ = replay_state(log_);
  }

  static Campaign create(CampaignCreated def, EventLog log, Clock clock) {
    if (!log.empty()) throw IntegrityError("cannot create a campaign over a non-empty log");
    Campaign c(std::move(log), std::move(clock));
    c.emit(std::move(def));
    return c;
  }

  const CampaignState& state() const noexcept { return state_; }
  const EventLog& log() const noexcept { return log_; }

  void register_annotator(const std::string& annotator_id, const std::string& token) {
    if (state_.annotators().count(annotator_id))
      throw StateError("annotator " + annotator_id + " is already registered", "conflict");
    emit(AnnotatorRegistered{annotator_id, token});
  }

  struct Claim {
    Assignment assignment;
    Task task;
    bool resumed = false;
  };

  std::optional<Claim> claim(const std::string& annotator_id) {
    auto decision = assign_next(state_, annotator_id);
    if (!decision) return std::nullopt;
    if (!decision->resumed)
      emit(TaskClaimed{annotator_id, decision->task_id, decision->escalation_images});
    const auto* a = state_.assignment(annotator_id, decision->task_id);
    return Claim{a->assignment, state_.task(decision->task_id).task, decision->resumed};
  }

  // Opens (or resumes) the annotator's session for one image of their task.
  SessionHandle open_session(const std::string& annotator_id, const std::string& task_id,
                             const std::string& image_id) {
    const auto* a = state_.assignment(annotator_id, task_id);
    if (!a || a->assignment.status != AssignmentStatus::Claimed)
      throw StateError(annotator_id + " holds no open claim on " + task_id, "no_claim");
    const auto& images = state_.task(task_id).task.image_ids;
    if (std::find(images.begin(), images.end(), image_id) == images.end())
      throw NotFoundError("image " + image_id + " is not part of task " + task_id);
    if (auto it = a->sessions.find(image_id); it != a->sessions.end())
      return {it->second, state_.session(it->second).session.current()};
    auto id = "s-" + std::to_string(state_.sessions_started() + 1);
    emit(SessionStarted{id, annotator_id, task_id, image_id});
    const auto& q = *state_.session(id).session.pending();
    emit(QuestionAsked{id, q.sequence_no, q.subject});
    return {id, q};
  }

  Step current(const std::string& session_id) const {
    return state_.session(session_id).session.current();
  }

  // Idempotent by (session, sequence_no): repeating an accepted answer
  // returns the original response without writing anything.
  Step answer(const std::string& session_id, std::uint32_t sequence_no, const Answer& answer) {
    const auto& rec = state_.session(session_id);
    const auto& transcript = rec.session.transcript();
    if (sequence_no >= 1 && sequence_no <= transcript.size()) {
      if (transcript[sequence_no - 1].answer != answer)
        throw StateError("question " + std::to_string(sequence_no) + " was already answered "
                         "differently", "stale_sequence");
      if (sequence_no == transcript.size()) return rec.session.current();
      return transcript[sequence_no].question;
    }
    if (rec.session.finished())
      throw StateError("session " + session_id + " is finished", "session_finished");
    const auto* a = state_.assignment(rec.annotator_id, rec.task_id);
    if (a->assignment.status != AssignmentStatus::Claimed)
      throw StateError("the claim on " + rec.task_id + " is no longer open", "no_claim");
    if (sequence_no != transcript.size() + 1)
      throw StateError("expected sequence_no " + std::to_string(transcript.size() + 1),
                       "stale_sequence");
    if (!answer.answers(rec.session.pending()->kind))
      throw ProtocolError("answer kind does not fit the pending question");

    const std::string annotator_id = rec.annotator_id, task_id = rec.task_id;
    emit(AnswerGiven{session_id, sequence_no, answer});
    const auto& session = state_.session(session_id).session;
    if (!session.finished()) {
      const auto& q = *session.pending();
      emit(QuestionAsked{session_id, q.sequence_no, q.subject});
      return q;
    }
    auto outcome = *session.outcome();
    emit(SessionFinished{session_id, outcome.key(), outcome.question_count});
    const auto* assignment = state_.assignment(annotator_id, task_id);
    if (assignment->outcomes.size() == state_.task(task_id).task.image_ids.size())
      complete_task(annotator_id, task_id);
    return outcome;
  }

  void abandon(const std::string& annotator_id, const std::string& task_id) {
    const auto* a = state_.assignment(annotator_id, task_id);
    if (!a || a->assignment.status != AssignmentStatus::Claimed)
      throw StateError(annotator_id + " holds no open claim on " + task_id, "no_claim");
    emit(TaskExpired{annotator_id, task_id});
  }

  // Expires every claim older than the configured timeout.
  std::size_t expire_stale(std::int64_t now) {
    std::vector<std::pair<std::string, std::string>> stale;
    for (const auto& [key, a] : state_.assignments())
      if (a.assignment.status == AssignmentStatus::Claimed &&
          now - a.claimed_at >= state_.settings().claim_timeout_ms)
        stale.push_back(key);
    for (const auto& [annotator, task] : stale) emit(TaskExpired{annotator, task});
    return stale.size();
  }

  std::int64_t now() const { return clock_(); }

 private:
  void emit(EventBody body) {
    Event e{log_.last_seq() + 1, clock_(), std::move(body)};
    state_.apply(e);
    log_.append(std::move(e));
  }

  void complete_task(const std::string& annotator_id, const std::string& task_id) {
    emit(TaskCompleted{annotator_id, task_id,
                       completion_code(state_.campaign_id(), task_id, annotator_id)});
    const auto images = state_.task(task_id).task.image_ids;
    for (const auto& img : images) {
      const auto& st = state_.image_state(img);
      if (st.votes.votes.size() < state_.settings().replication) continue;
      auto result = aggregate(st.votes, state_.settings().escalation_cap);
      if (result.kind == ConsensusKind::NeedsEscalation) {
        emit(EscalationOpened{img, st.escalation_rounds + 1});
        continue;
      }
      ConsensusReached cr{img, result.kind, std::nullopt, {}};
      if (result.label) cr.label = result.label->key();
      for (const auto& [k, n] : result.vote_tally) cr.tally[k.str()] = n;
      emit(std::move(cr));
    }
  }

  EventLog log_;
  Clock clock_;
  CampaignState state_;
};

}  // namespace vislabel
