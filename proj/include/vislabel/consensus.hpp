#pragma once

#include <algorithm>
#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "vislabel/engine.hpp"
#include "vislabel/error.hpp"

namespace vislabel {

inline constexpr std::size_t kDefaultTaskSize = 50;
inline constexpr std::size_t kDefaultReplication = 3;
inline constexpr std::size_t kDefaultEscalationCap = 5;

struct Task {
  std::string task_id;
  std::vector<std::string> image_ids;
  Protocol protocol = Protocol::MethodC;
  std::size_t size = kDefaultTaskSize;

  bool operator==(const Task&) const = default;
};

inline std::string regular_task_id(std::size_t index) { return "t-" + std::to_string(index + 1); }

// Partitions `image_ids` in order into consecutive tasks of `size` images;
// only the last task may be shorter.
inline std::vector<Task> build_tasks(const std::vector<std::string>& image_ids, std::size_t size,
                                     Protocol protocol) {
  if (size < 1) throw ConfigError("task size must be at least 1");
  std::set<std::string> distinct(image_ids.begin(), image_ids.end());
  if (distinct.size() != image_ids.size()) throw ConfigError("image ids must be distinct");
  std::vector<Task> tasks;
  for (std::size_t begin = 0; begin < image_ids.size(); begin += size) {
    auto end = std::min(begin + size, image_ids.size());
    tasks.push_back({regular_task_id(tasks.size()),
                     {image_ids.begin() + static_cast<std::ptrdiff_t>(begin),
                      image_ids.begin() + static_cast<std::ptrdiff_t>(end)},
                     protocol,
                     size});
  }
  return tasks;
}

struct Vote {
  std::string annotator_id;
  LabelOutcome outcome;
  bool operator==(const Vote&) const = default;
};

struct VoteSet {
  std::string image_id;
  std::vector<Vote> votes;
  std::size_t target_replication = kDefaultReplication;
  bool operator==(const VoteSet&) const = default;
};

enum class ConsensusKind { Final, NeedsEscalation, Unresolved };

inline std::string_view to_string(ConsensusKind k) {
  switch (k) {
    case ConsensusKind::Final: return "Final";
    case ConsensusKind::NeedsEscalation: return "NeedsEscalation";
    case ConsensusKind::Unresolved: return "Unresolved";
  }
  return "?";
}

struct ConsensusResult {
  ConsensusKind kind = ConsensusKind::NeedsEscalation;
  std::optional<LabelOutcome> label;  // Final only
  std::map<LabelKey, std::size_t> vote_tally;
  bool operator==(const ConsensusResult&) const = default;
};

// Exact-match majority over (outcome kind, node). A label is adopted when it
// has at least two votes and strictly more than any other. Otherwise more
// votes are requested until `max_replication` votes exist, after which the
// image is unresolved. Fewer than target votes always asks for more.
inline ConsensusResult aggregate(const VoteSet& v,
                                 std::size_t max_replication = kDefaultEscalationCap) {
  if (v.votes.empty()) throw PreconditionError("vote set for " + v.image_id + " is empty");
  std::set<std::string> annotators;
  ConsensusResult result;
  for (const auto& vote : v.votes) {
    if (!annotators.insert(vote.annotator_id).second)
      throw IntegrityError("annotator " + vote.annotator_id + " voted twice on " + v.image_id);
    ++result.vote_tally[vote.outcome.key()];
  }
  if (v.votes.size() < v.target_replication) return result;

  std::size_t top = 0, top_count = 0;
  const LabelKey* winner = nullptr;
  for (const auto& [key, count] : result.vote_tally) {
    if (count > top) {
      top = count;
      top_count = 1;
      winner = &key;
    } else if (count == top) {
      ++top_count;
    }
  }
  if (top >= 2 && top_count == 1) {
    result.kind = ConsensusKind::Final;
    // Earliest vote for the winning key; outcomes with equal keys differ
    // only in question_count.
    for (const auto& vote : v.votes)
      if (vote.outcome.key() == *winner) {
        result.label = vote.outcome;
        break;
      }
    return result;
  }
  result.kind = v.votes.size() < max_replication ? ConsensusKind::NeedsEscalation
                                                 : ConsensusKind::Unresolved;
  return result;
}

}  // namespace vislabel
