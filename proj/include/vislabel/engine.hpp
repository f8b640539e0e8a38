#pragma once

#include <algorithm>
#include <cstdint>
#include <deque>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "vislabel/error.hpp"
#include "vislabel/hierarchy.hpp"

namespace vislabel {

// A: flat choice among leaf names. B: hierarchy traversal, names only.
// C: hierarchy traversal with genus and differentia text.
enum class Protocol { MethodA, MethodB, MethodC };

inline constexpr Protocol kAllProtocols[] = {Protocol::MethodA, Protocol::MethodB,
                                             Protocol::MethodC};

inline std::string_view to_string(Protocol p) {
  switch (p) {
    case Protocol::MethodA: return "A";
    case Protocol::MethodB: return "B";
    case Protocol::MethodC: return "C";
  }
  return "?";
}

inline Protocol parse_protocol(std::string_view s) {
  if (s == "A" || s == "MethodA" || s == "method_a" || s == "a") return Protocol::MethodA;
  if (s == "B" || s == "MethodB" || s == "method_b" || s == "b") return Protocol::MethodB;
  if (s == "C" || s == "MethodC" || s == "method_c" || s == "c") return Protocol::MethodC;
  throw ConfigError("unknown protocol \"" + std::string(s) + "\"");
}

inline bool uses_hierarchy(Protocol p) { return p != Protocol::MethodA; }
inline bool uses_visual_properties(Protocol p) { return p == Protocol::MethodC; }

enum class QuestionKind { DifferentiaYesNo, FlatChoice };

struct Choice {
  ConceptId id;
  std::string name;
  bool operator==(const Choice&) const = default;
};

struct Question {
  std::uint32_t sequence_no = 0;
  std::optional<ConceptId> subject;
  QuestionKind kind = QuestionKind::DifferentiaYesNo;
  std::string prompt_name;
  std::string prompt_genus;        // MethodC only
  std::string prompt_differentia;  // MethodC only
  std::vector<Choice> choices;     // FlatChoice only
  bool offers_none_of_these = false;

  // Human-readable prompt.
  std::string text() const {
    if (kind == QuestionKind::FlatChoice) return "Which category does the object belong to?";
    if (!prompt_differentia.empty()) {
      std::string t = "Does the object show " + prompt_differentia;
      if (!prompt_genus.empty()) t += ", a kind of " + prompt_genus;
      return t + "?";
    }
    return "Is the object a " + prompt_name + "?";
  }

  bool operator==(const Question&) const = default;
};

enum class AnswerKind { Yes, No, Choice, NoneOfThese };

struct Answer {
  AnswerKind kind = AnswerKind::No;
  std::optional<ConceptId> choice;

  static Answer yes() { return {AnswerKind::Yes, std::nullopt}; }
  static Answer no() { return {AnswerKind::No, std::nullopt}; }
  static Answer none_of_these() { return {AnswerKind::NoneOfThese, std::nullopt}; }
  static Answer pick(ConceptId id) { return {AnswerKind::Choice, std::move(id)}; }
  static Answer yes_no(bool b) { return b ? yes() : no(); }

  bool answers(QuestionKind q) const {
    bool yes_no = kind == AnswerKind::Yes || kind == AnswerKind::No;
    return q == QuestionKind::DifferentiaYesNo ? yes_no : !yes_no;
  }

  bool operator==(const Answer&) const = default;
};

inline std::string_view to_string(AnswerKind k) {
  switch (k) {
    case AnswerKind::Yes: return "Yes";
    case AnswerKind::No: return "No";
    case AnswerKind::Choice: return "Choice";
    case AnswerKind::NoneOfThese: return "NoneOfThese";
  }
  return "?";
}

enum class OutcomeKind { Classified, UnrecognisedAt, Discharged };

inline std::string_view to_string(OutcomeKind k) {
  switch (k) {
    case OutcomeKind::Classified: return "Classified";
    case OutcomeKind::UnrecognisedAt: return "UnrecognisedAt";
    case OutcomeKind::Discharged: return "Discharged";
  }
  return "?";
}

inline OutcomeKind parse_outcome_kind(std::string_view s) {
  if (s == "Classified") return OutcomeKind::Classified;
  if (s == "UnrecognisedAt") return OutcomeKind::UnrecognisedAt;
  if (s == "Discharged") return OutcomeKind::Discharged;
  throw ParseError("outcome", "unknown outcome kind \"" + std::string(s) + "\"");
}

struct LevelText {
  std::string name;
  std::string genus;
  std::string differentia;
  bool operator==(const LevelText&) const = default;
};

// Identity of an outcome for consensus and reliability: kind plus node.
struct LabelKey {
  OutcomeKind kind = OutcomeKind::Discharged;
  std::optional<ConceptId> label;

  // Nominal value used in reliability data. Unrecognised outcomes are keyed
  // by the node they stopped at unless `collapse_unrecognised` is set.
  std::string value(bool collapse_unrecognised = false) const {
    if (kind == OutcomeKind::Discharged) return "Discharged";
    if (kind == OutcomeKind::UnrecognisedAt && collapse_unrecognised) return "Unrecognised";
    return label->str();
  }

  // Unambiguous text form, e.g. "Classified:1-1-1".
  std::string str() const {
    std::string s(to_string(kind));
    if (label) s += ":" + label->str();
    return s;
  }

  auto operator<=>(const LabelKey&) const = default;
  bool operator==(const LabelKey&) const = default;
};

struct LabelOutcome {
  OutcomeKind kind = OutcomeKind::Discharged;
  std::optional<ConceptId> label;
  std::vector<LevelText> label_path_texts;
  std::uint32_t question_count = 0;

  LabelKey key() const { return {kind, label}; }
  bool operator==(const LabelOutcome&) const = default;
};

inline LabelOutcome make_outcome(const Hierarchy& h, OutcomeKind kind,
                                 std::optional<ConceptId> label, std::uint32_t question_count) {
  LabelOutcome out{kind, std::move(label), {}, question_count};
  if (out.label)
    for (const auto* n : h.path_to(*out.label))
      out.label_path_texts.push_back({n->name, n->genus, n->differentia});
  return out;
}

struct Exchange {
  Question question;
  Answer answer;
  bool operator==(const Exchange&) const = default;
};

// Result of a transition: either the next question or the final outcome.
using Step = std::variant<Question, LabelOutcome>;

class AnnotationSession;
std::pair<AnnotationSession, Question> start_session(const Hierarchy& h, std::string image_id,
                                                     Protocol protocol,
                                                     std::string session_id = "session");

// One image's interactive traversal. Pre-root phase walks the roots in
// document order; descent phase scans the children of the confirmed cursor.
class AnnotationSession {
 public:
  const std::string& id() const noexcept { return id_; }
  const std::string& image_id() const noexcept { return image_id_; }
  Protocol protocol() const noexcept { return protocol_; }
  const Hierarchy& hierarchy() const noexcept { return hierarchy_; }
  const std::vector<Exchange>& transcript() const noexcept { return transcript_; }
  const std::optional<LabelOutcome>& outcome() const noexcept { return outcome_; }
  const std::optional<Question>& pending() const noexcept { return pending_; }
  bool finished() const noexcept { return outcome_.has_value(); }

  // Confirmed node, or nullopt while still in the pre-root phase.
  const std::optional<ConceptId>& cursor() const noexcept { return cursor_; }
  const std::deque<ConceptId>& sibling_queue() const noexcept { return sibling_queue_; }

  // The pending question, or the outcome once finished.
  Step current() const {
    if (outcome_) return *outcome_;
    return *pending_;
  }

  Step submit(const Answer& a) {
    if (outcome_) throw StateError("session " + id_ + " is finished", "session_finished");
    const Question& q = *pending_;
    if (!a.answers(q.kind))
      throw ProtocolError("answer " + std::string(to_string(a.kind)) +
                          " does not fit question " + std::to_string(q.sequence_no));
    if (a.kind == AnswerKind::Choice) {
      bool offered = std::any_of(q.choices.begin(), q.choices.end(),
                                 [&](const Choice& c) { return c.id == *a.choice; });
      if (!offered) throw ProtocolError("choice " + a.choice->str() + " was not offered");
    }
    transcript_.push_back({q, a});
    const std::optional<ConceptId> subject_id = q.subject;
    pending_.reset();  // q dangles from here on

    if (protocol_ == Protocol::MethodA) {
      if (a.kind == AnswerKind::Choice)
        return finish(OutcomeKind::Classified, *a.choice);
      return finish(OutcomeKind::Discharged, std::nullopt);
    }

    if (a.kind == AnswerKind::Yes) return descend(*subject_id);

    if (!cursor_) {
      if (++root_index_ < hierarchy_.roots().size())
        return ask(hierarchy_.roots()[root_index_].id);
      return finish(OutcomeKind::Discharged, std::nullopt);
    }
    if (!sibling_queue_.empty()) {
      auto next = sibling_queue_.front();
      sibling_queue_.pop_front();
      return ask(next);
    }
    // Every child of the cursor was denied: the label stays at the cursor.
    return finish(OutcomeKind::UnrecognisedAt, *cursor_);
  }

  // Equality ignores the hierarchy handle; campaigns compare it once.
  friend bool operator==(const AnnotationSession& a, const AnnotationSession& b) {
    return a.id_ == b.id_ && a.image_id_ == b.image_id_ && a.protocol_ == b.protocol_ &&
           a.cursor_ == b.cursor_ && a.root_index_ == b.root_index_ &&
           a.sibling_queue_ == b.sibling_queue_ && a.pending_ == b.pending_ &&
           a.transcript_ == b.transcript_ && a.outcome_ == b.outcome_;
  }

 private:
  friend std::pair<AnnotationSession, Question> start_session(const Hierarchy&, std::string,
                                                              Protocol, std::string);

  AnnotationSession(Hierarchy h, std::string id, std::string image_id, Protocol p)
      : hierarchy_(std::move(h)), id_(std::move(id)), image_id_(std::move(image_id)), protocol_(p) {}

  std::uint32_t next_sequence_no() const {
    return static_cast<std::uint32_t>(transcript_.size() + 1);
  }

  Question ask(const ConceptId& id) {
    const auto& node = hierarchy_.lookup(id);
    Question q;
    q.sequence_no = next_sequence_no();
    q.subject = id;
    q.kind = QuestionKind::DifferentiaYesNo;
    q.prompt_name = node.name;
    if (protocol_ == Protocol::MethodC) {
      q.prompt_genus = node.genus;
      q.prompt_differentia = node.differentia;
    }
    pending_ = q;
    return q;
  }

  Question ask_flat() {
    Question q;
    q.sequence_no = next_sequence_no();
    q.kind = QuestionKind::FlatChoice;
    q.prompt_name = "category";
    for (const auto* leaf : hierarchy_.leaves()) q.choices.push_back({leaf->id, leaf->name});
    q.offers_none_of_these = true;
    pending_ = q;
    return q;
  }

  Step descend(const ConceptId& id) {
    cursor_ = id;
    const auto& node = hierarchy_.lookup(id);
    if (node.is_leaf()) return finish(OutcomeKind::Classified, id);
    sibling_queue_.clear();
    for (std::size_t i = 1; i < node.children.size(); ++i)
      sibling_queue_.push_back(node.children[i].id);
    return ask(node.children.front().id);
  }

  Step finish(OutcomeKind kind, std::optional<ConceptId> label) {
    sibling_queue_.clear();
    outcome_ = make_outcome(hierarchy_, kind, std::move(label),
                            static_cast<std::uint32_t>(transcript_.size()));
    return *outcome_;
  }

  Hierarchy hierarchy_;
  std::string id_;
  std::string image_id_;
  Protocol protocol_;
  std::optional<ConceptId> cursor_;
  std::size_t root_index_ = 0;
  std::deque<ConceptId> sibling_queue_;
  std::optional<Question> pending_;
  std::vector<Exchange> transcript_;
  std::optional<LabelOutcome> outcome_;
};

inline std::pair<AnnotationSession, Question> start_session(const Hierarchy& h,
                                                            std::string image_id,
                                                            Protocol protocol,
                                                            std::string session_id) {
  if (h.empty()) throw ConfigError("cannot start a session over an empty hierarchy");
  AnnotationSession s(h, std::move(session_id), std::move(image_id), protocol);
  Question q = protocol == Protocol::MethodA ? s.ask_flat() : s.ask(h.roots().front().id);
  return {std::move(s), std::move(q)};
}

inline Step submit_answer(AnnotationSession& session, const Answer& a) { return session.submit(a); }

// Largest number of questions any hierarchy-traversal session can ask. A
// session that ends at leaf n has asked at most one question per earlier
// sibling of each node on n's path, plus the node itself, which sums the
// positional id. Denial outcomes are dominated by the last child's subtree.
inline std::uint32_t question_upper_bound(const Hierarchy& h) {
  std::uint32_t best = 0;
  for (const auto* leaf : h.leaves()) {
    auto p = leaf->id.path();
    best = std::max(best, std::accumulate(p.begin(), p.end(), std::uint32_t{0}));
  }
  return best;
}

// Re-derives the outcome of a complete transcript.
inline LabelOutcome replay(const Hierarchy& h, Protocol protocol, std::span<const Answer> answers,
                           std::string image_id = "replay") {
  auto [session, first] = start_session(h, std::move(image_id), protocol, "replay");
  for (std::size_t i = 0; i < answers.size(); ++i) {
    if (session.finished())
      throw ReplayError(i + 1, "transcript continues after the session finished");
    try {
      session.submit(answers[i]);
    } catch (const ProtocolError& e) {
      throw ReplayError(i + 1, e.what());
    }
  }
  if (!session.finished())
    throw ReplayError(answers.size() + 1, "transcript ends before the session finished");
  return *session.outcome();
}

}  // namespace vislabel
