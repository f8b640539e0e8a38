#pragma once

#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "vislabel/campaign.hpp"
#include "vislabel/engine.hpp"
#include "vislabel/error.hpp"
#include "vislabel/hierarchy.hpp"
#include "vislabel/ingest.hpp"
#include "vislabel/reliability.hpp"

namespace vislabel {

// Final (image, outcome) pairs in image order.
inline std::vector<std::pair<std::string, LabelOutcome>> final_results(const CampaignState& s) {
  std::vector<std::pair<std::string, LabelOutcome>> out;
  for (const auto& r : s.images()) {
    const auto& st = s.image_state(r.image_id);
    if (st.status == ImageStatus::Final) out.emplace_back(r.image_id, *st.final_label);
  }
  return out;
}

// Maps an annotator id to the observer column it is tallied under.
using ObserverKey = std::function<std::string(const std::string&)>;

// Every committed vote as reliability data: unit = image, value = label key.
inline ReliabilityData reliability_from_campaign(const CampaignState& s,
                                                 bool collapse_unrecognised = false,
                                                 const ObserverKey& observer_of = {}) {
  ReliabilityData d;
  for (const auto& r : s.images()) {
    std::set<std::string> used;
    for (const auto& v : s.image_state(r.image_id).votes.votes) {
      auto observer = observer_of ? observer_of(v.annotator_id) : v.annotator_id;
      // With grouped observers only a group's first vote on a unit counts.
      if (!used.insert(observer).second) continue;
      d.add(r.image_id, observer, v.outcome.key().value(collapse_unrecognised));
    }
  }
  return d;
}

struct CampaignMetrics {
  ProgressReport progress;
  AlphaReport alpha;
  std::vector<CategoryCount> counts;
};

inline CampaignMetrics campaign_metrics(const CampaignState& s) {
  return {campaign_progress(s), try_alpha(reliability_from_campaign(s)),
          category_count_table(final_results(s), s.hierarchy(), leaf_ids(s.hierarchy()))};
}

inline json metrics_to_json(const CampaignMetrics& m) {
  json counts = json::array();
  for (const auto& c : m.counts) counts.push_back(json{{"category", c.category}, {"count", c.count}});
  json j = json::object();
  j["progress"] = progress_to_json(m.progress);
  j["alpha"] = m.alpha.value ? json(*m.alpha.value) : json(nullptr);
  j["alpha_status"] = m.alpha.value ? "ok" : "unavailable: " + m.alpha.status;
  j["counts"] = std::move(counts);
  return j;
}

// ---- Dataset export ----------------------------------------------------------

struct ExportRow {
  std::string image_id;
  std::string uri;
  std::optional<OutcomeKind> outcome;  // empty for unresolved images
  std::optional<ConceptId> label;
  std::vector<ConceptId> path;
  std::vector<std::string> names;
  std::vector<std::string> genus;
  std::vector<std::string> differentia;
  std::string description;
  std::size_t annotators = 0;
  std::uint32_t escalations = 0;
  bool operator==(const ExportRow&) const = default;
};

// "<leaf>: a <parent> with <leaf differentia>", then the same for each
// ancestor up to the root, which reads "<root>: <differentia>".
inline std::string compose_description(const std::vector<const VisualCategory*>& path) {
  if (path.empty()) return "Discharged: matches no category in the hierarchy";
  std::string out;
  for (std::size_t i = path.size(); i-- > 0;) {
    if (!out.empty()) out += "; ";
    out += path[i]->name + ": ";
    if (i > 0) out += "a " + path[i - 1]->name + " with ";
    out += path[i]->differentia;
  }
  return out;
}

struct ExportOptions {
  bool include_unresolved = false;
};

// One row per Final image (and Unresolved ones when asked), in image order.
inline std::vector<ExportRow> export_dataset(const CampaignState& s, const Hierarchy& h,
                                             ExportOptions opts = {}) {
  std::vector<ExportRow> rows;
  for (const auto& r : s.images()) {
    const auto& st = s.image_state(r.image_id);
    bool final = st.status == ImageStatus::Final;
    if (!final && !(opts.include_unresolved && st.status == ImageStatus::Unresolved)) continue;
    ExportRow row;
    row.image_id = r.image_id;
    row.uri = r.uri;
    row.annotators = st.votes.votes.size();
    row.escalations = st.escalation_rounds;
    std::vector<const VisualCategory*> path;
    if (final) {
      row.outcome = st.final_label->kind;
      row.label = st.final_label->label;
      if (row.label) {
        if (!h.contains(*row.label))
          throw IntegrityError("final label " + row.label->str() + " of " + r.image_id +
                               " is not in the hierarchy");
        path = h.path_to(*row.label);
      }
      row.description = compose_description(path);
    } else {
      row.description = "Unresolved: annotators did not agree";
    }
    for (const auto* n : path) {
      row.path.push_back(n->id);
      row.names.push_back(n->name);
      row.genus.push_back(n->genus);
      row.differentia.push_back(n->differentia);
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty())
    throw PreconditionError(opts.include_unresolved ? "campaign has no Final or Unresolved image"
                                                    : "campaign has no Final image to export");
  return rows;
}

inline json export_row_to_json(const ExportRow& r) {
  json j = json::object();
  j["image_id"] = r.image_id;
  j["uri"] = r.uri;
  j["consensus"] = r.outcome ? "Final" : "Unresolved";
  j["outcome"] = r.outcome ? json(std::string(to_string(*r.outcome))) : json(nullptr);
  j["label"] = r.label ? json(r.label->str()) : json(nullptr);
  json path = json::array();
  for (const auto& id : r.path) path.push_back(id.str());
  j["path"] = std::move(path);
  j["names"] = r.names;
  j["genus"] = r.genus;
  j["differentia"] = r.differentia;
  j["description"] = r.description;
  j["annotators"] = r.annotators;
  j["escalations"] = r.escalations;
  return j;
}

inline std::string serialize_export(const std::vector<ExportRow>& rows) {
  std::string out;
  for (const auto& r : rows) out += export_row_to_json(r).dump() + "\n";
  return out;
}

inline std::vector<ExportRow> parse_export(std::string_view document) {
  std::vector<ExportRow> rows;
  for (const auto& [line_no, line] : detail::split_lines(document)) {
    auto j = detail::parse_json_line(line, line_no);
    try {
      ExportRow r;
      r.image_id = j.at("image_id").get<std::string>();
      r.uri = j.at("uri").get<std::string>();
      const auto consensus = j.at("consensus").get<std::string>();
      if (consensus != "Final" && consensus != "Unresolved")
        throw ParseError("line " + std::to_string(line_no), "unknown consensus " + consensus);
      if (!j.at("outcome").is_null())
        r.outcome = parse_outcome_kind(j["outcome"].get<std::string>());
      if ((consensus == "Final") != r.outcome.has_value())
        throw ParseError("line " + std::to_string(line_no), "outcome must be set exactly for Final rows");
      if (!j.at("label").is_null()) r.label = ConceptId::parse(j["label"].get<std::string>());
      for (const auto& p : j.at("path")) r.path.push_back(ConceptId::parse(p.get<std::string>()));
      r.names = j.at("names").get<std::vector<std::string>>();
      r.genus = j.at("genus").get<std::vector<std::string>>();
      r.differentia = j.at("differentia").get<std::vector<std::string>>();
      r.description = j.at("description").get<std::string>();
      r.annotators = j.at("annotators").get<std::size_t>();
      r.escalations = j.at("escalations").get<std::uint32_t>();
      rows.push_back(std::move(r));
    } catch (const json::exception& e) {
      throw ParseError("line " + std::to_string(line_no), e.what());
    }
  }
  return rows;
}

// Checks each row's path is the root-to-label chain of `h` with matching texts.
inline void check_export(const std::vector<ExportRow>& rows, const Hierarchy& h) {
  for (const auto& r : rows) {
    if (!r.label) {
      if (!r.path.empty()) throw IntegrityError(r.image_id + ": unlabelled row with a path");
      continue;
    }
    auto chain = h.path_to(*r.label);
    if (chain.size() != r.path.size() || r.names.size() != chain.size())
      throw IntegrityError(r.image_id + ": label path length mismatch");
    for (std::size_t i = 0; i < chain.size(); ++i)
      if (chain[i]->id != r.path[i] || chain[i]->name != r.names[i] ||
          chain[i]->differentia != r.differentia[i] || chain[i]->genus != r.genus[i])
        throw IntegrityError(r.image_id + ": label path disagrees with the hierarchy");
  }
}

}  // namespace vislabel
