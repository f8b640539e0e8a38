#pragma once

#include <cmath>
#include <cstdio>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "vislabel/engine.hpp"
#include "vislabel/error.hpp"
#include "vislabel/hierarchy.hpp"

namespace vislabel {

// Units x observers matrix of nominal values with missing cells.
class ReliabilityData {
 public:
  void add(const std::string& unit, const std::string& observer, std::string value) {
    auto u = intern(unit, units_, unit_index_);
    auto o = intern(observer, observers_, observer_index_);
    if (!cells_.emplace(std::make_pair(u, o), std::move(value)).second)
      throw IntegrityError("observer " + observer + " already rated unit " + unit);
  }

  const std::vector<std::string>& units() const noexcept { return units_; }
  const std::vector<std::string>& observers() const noexcept { return observers_; }

  std::optional<std::string> value(std::size_t unit, std::size_t observer) const {
    auto it = cells_.find({unit, observer});
    if (it == cells_.end()) return std::nullopt;
    return it->second;
  }

  // Values of every unit in unit order; missing cells omitted.
  std::vector<std::vector<std::string>> unit_values() const {
    std::vector<std::vector<std::string>> out(units_.size());
    for (const auto& [key, v] : cells_) out[key.first].push_back(v);
    return out;
  }

  std::size_t cell_count() const noexcept { return cells_.size(); }

 private:
  static std::size_t intern(const std::string& name, std::vector<std::string>& names,
                            std::map<std::string, std::size_t>& index) {
    auto [it, inserted] = index.emplace(name, names.size());
    if (inserted) names.push_back(name);
    return it->second;
  }

  std::vector<std::string> units_;
  std::vector<std::string> observers_;
  std::map<std::string, std::size_t> unit_index_;
  std::map<std::string, std::size_t> observer_index_;
  std::map<std::pair<std::size_t, std::size_t>, std::string> cells_;
};

struct CoincidenceMatrix {
  std::vector<std::string> labels;  // sorted
  std::vector<double> o;            // row-major labels x labels
  std::vector<double> n_c;
  double n = 0.0;

  double at(std::size_t c, std::size_t k) const { return o[c * labels.size() + k]; }
  double at(const std::string& c, const std::string& k) const {
    return at(index_of(c), index_of(k));
  }

  std::size_t index_of(const std::string& label) const {
    auto it = std::lower_bound(labels.begin(), labels.end(), label);
    if (it == labels.end() || *it != label) throw NotFoundError("no label " + label);
    return static_cast<std::size_t>(it - labels.begin());
  }
};

// o(c,k) = sum over units with m_u >= 2 of (ordered pairs (c,k) from distinct
// observers) / (m_u - 1).
inline CoincidenceMatrix coincidence_matrix(const ReliabilityData& d) {
  auto units = d.unit_values();
  std::map<std::string, std::size_t> label_index;
  bool pairable = false;
  for (const auto& values : units) {
    if (values.size() < 2) continue;
    pairable = true;
    for (const auto& v : values) label_index.emplace(v, 0);
  }
  if (!pairable) throw InsufficientDataError("no unit has two or more values");

  CoincidenceMatrix m;
  for (auto& [label, idx] : label_index) {
    idx = m.labels.size();
    m.labels.push_back(label);
  }
  const auto L = m.labels.size();
  m.o.assign(L * L, 0.0);
  m.n_c.assign(L, 0.0);
  std::vector<double> counts(L);
  for (const auto& values : units) {
    if (values.size() < 2) continue;
    std::fill(counts.begin(), counts.end(), 0.0);
    for (const auto& v : values) counts[label_index.at(v)] += 1.0;
    const double denom = static_cast<double>(values.size()) - 1.0;
    for (std::size_t c = 0; c < L; ++c) {
      if (counts[c] == 0.0) continue;
      for (std::size_t k = 0; k < L; ++k) {
        double pairs = counts[c] * (counts[k] - (c == k ? 1.0 : 0.0));
        if (pairs != 0.0) m.o[c * L + k] += pairs / denom;
      }
    }
  }
  for (std::size_t c = 0; c < L; ++c) {
    for (std::size_t k = 0; k < L; ++k) m.n_c[c] += m.o[c * L + k];
    m.n += m.n_c[c];
  }
  return m;
}

// Krippendorff's alpha with the nominal distance. Throws
// DegenerateDataError when every pairable value is identical.
inline double krippendorff_alpha_nominal(const CoincidenceMatrix& m) {
  const auto L = m.labels.size();
  double observed = 0.0, expected_num = 0.0;
  for (std::size_t c = 0; c < L; ++c)
    for (std::size_t k = 0; k < L; ++k)
      if (c != k) {
        observed += m.at(c, k);
        expected_num += m.n_c[c] * m.n_c[k];
      }
  if (expected_num == 0.0) throw DegenerateDataError();
  const double expected = expected_num / (m.n - 1.0);
  return 1.0 - observed / expected;
}

inline double krippendorff_alpha_nominal(const ReliabilityData& d) {
  return krippendorff_alpha_nominal(coincidence_matrix(d));
}

// Alpha as a reportable value: a number, or the reason there is none.
struct AlphaReport {
  std::optional<double> value;
  std::string status;  // "ok", "insufficient_data" or "perfect_homogeneity"
};

inline AlphaReport try_alpha(const ReliabilityData& d) {
  try {
    return {krippendorff_alpha_nominal(d), "ok"};
  } catch (const InsufficientDataError&) {
    return {std::nullopt, "insufficient_data"};
  } catch (const DegenerateDataError&) {
    return {std::nullopt, "perfect_homogeneity"};
  }
}

// Reads long-format CSV: header `unit,observer,value`, one rated cell per row.
inline ReliabilityData parse_reliability_csv(std::string_view text) {
  ReliabilityData d;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  bool header = true;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    std::vector<std::string> fields(1);
    for (char c : line) {
      if (c == ',')
        fields.emplace_back();
      else
        fields.back() += c;
    }
    if (header) {
      if (fields != std::vector<std::string>{"unit", "observer", "value"})
        throw ParseError("line " + std::to_string(line_no), "expected header unit,observer,value");
      header = false;
      continue;
    }
    if (fields.size() != 3)
      throw ParseError("line " + std::to_string(line_no), "expected 3 fields");
    if (fields[2].empty()) continue;  // missing value
    d.add(fields[0], fields[1], fields[2]);
  }
  return d;
}

// ---- Category count table --------------------------------------------------

struct CategoryCount {
  std::string category;
  std::optional<ConceptId> id;
  std::size_t count = 0;
  bool operator==(const CategoryCount&) const = default;
};

inline constexpr std::string_view kUnrecognisedRow = "Unrecognised";
inline constexpr std::string_view kDischargedRow = "Discharged";

// One row per leaf in `leaf_set`, then Unrecognised and Discharged.
inline std::vector<CategoryCount> category_count_table(
    const std::vector<std::pair<std::string, LabelOutcome>>& results, const Hierarchy& h,
    const std::vector<ConceptId>& leaf_set) {
  std::vector<CategoryCount> rows;
  std::map<ConceptId, std::size_t> row_of;
  for (const auto& id : leaf_set) {
    const auto& node = h.lookup(id);
    if (!node.is_leaf()) throw PreconditionError(id.str() + " is not a leaf");
    row_of.emplace(id, rows.size());
    rows.push_back({node.name, id, 0});
  }
  const auto unrecognised = rows.size();
  rows.push_back({std::string(kUnrecognisedRow), std::nullopt, 0});
  rows.push_back({std::string(kDischargedRow), std::nullopt, 0});
  for (const auto& [image, outcome] : results) {
    if (outcome.label && !h.contains(*outcome.label))
      throw IntegrityError("image " + image + " is labelled outside the hierarchy");
    switch (outcome.kind) {
      case OutcomeKind::Classified: {
        auto it = row_of.find(*outcome.label);
        if (it == row_of.end())
          throw IntegrityError("image " + image + " is labelled with leaf " +
                               outcome.label->str() + " outside the leaf set");
        ++rows[it->second].count;
        break;
      }
      case OutcomeKind::UnrecognisedAt: ++rows[unrecognised].count; break;
      case OutcomeKind::Discharged: ++rows[unrecognised + 1].count; break;
    }
  }
  return rows;
}

inline std::vector<ConceptId> leaf_ids(const Hierarchy& h) {
  std::vector<ConceptId> ids;
  for (const auto* l : h.leaves()) ids.push_back(l->id);
  return ids;
}

// ---- Cost report -----------------------------------------------------------

struct SessionCost {
  Protocol protocol = Protocol::MethodC;
  std::string task_id;
  std::size_t task_size = 0;
  std::uint32_t question_count = 0;
};

struct RateModel {
  std::map<Protocol, double> seconds_per_question;
  std::map<std::pair<Protocol, std::size_t>, double> payment_per_task;

  // Assumed rates: payments follow the crowdsourcing study's per-task
  // amounts and scale linearly with task size; question times are guesses.
  static RateModel defaults() {
    RateModel m;
    m.seconds_per_question = {{Protocol::MethodA, 5.0},
                              {Protocol::MethodB, 2.0},
                              {Protocol::MethodC, 2.2}};
    for (std::size_t size : {10u, 30u, 50u, 100u}) {
      double scale = static_cast<double>(size) / 50.0;
      m.payment_per_task[{Protocol::MethodA, size}] = 1.0 * scale;
      m.payment_per_task[{Protocol::MethodB, size}] = 1.5 * scale;
      m.payment_per_task[{Protocol::MethodC, size}] = 1.5 * scale;
    }
    return m;
  }
};

struct CostRow {
  Protocol protocol = Protocol::MethodC;
  std::size_t task_size = 0;
  std::optional<double> alpha;
  double time_min = 0.0;
  double payment = 0.0;
  double mean_questions_per_image = 0.0;
  std::uint32_t max_questions = 0;
  std::size_t tasks = 0;
};

struct CostReport {
  std::vector<CostRow> rows;  // ordered by (protocol, task size)
  bool simulated = true;
};

// Mean task time = mean questions per task x seconds per question / 60.
// `alphas` optionally joins reliability results per (protocol, size).
inline CostReport cost_report(
    const std::vector<SessionCost>& sessions, const RateModel& rates,
    const std::map<std::pair<Protocol, std::size_t>, double>& alphas = {}) {
  struct Acc {
    std::map<std::string, double> per_task;
    double questions = 0;
    std::size_t sessions = 0;
    std::uint32_t max_q = 0;
  };
  std::map<std::pair<Protocol, std::size_t>, Acc> groups;
  for (const auto& s : sessions) {
    auto& g = groups[{s.protocol, s.task_size}];
    g.per_task[s.task_id] += s.question_count;
    g.questions += s.question_count;
    ++g.sessions;
    g.max_q = std::max(g.max_q, s.question_count);
  }
  CostReport report;
  for (const auto& [key, g] : groups) {
    auto sec = rates.seconds_per_question.find(key.first);
    if (sec == rates.seconds_per_question.end() || sec->second <= 0.0)
      throw ConfigError("no positive seconds-per-question rate for method " +
                        std::string(to_string(key.first)));
    auto pay = rates.payment_per_task.find(key);
    if (pay == rates.payment_per_task.end() || pay->second <= 0.0)
      throw ConfigError("no positive payment for method " + std::string(to_string(key.first)) +
                        " with " + std::to_string(key.second) + " images per task");
    double total = 0;
    for (const auto& [task, q] : g.per_task) total += q;
    CostRow row;
    row.protocol = key.first;
    row.task_size = key.second;
    row.tasks = g.per_task.size();
    row.time_min = total / static_cast<double>(g.per_task.size()) * sec->second / 60.0;
    row.payment = pay->second;
    row.mean_questions_per_image = g.questions / static_cast<double>(g.sessions);
    row.max_questions = g.max_q;
    if (auto a = alphas.find(key); a != alphas.end()) row.alpha = a->second;
    report.rows.push_back(row);
  }
  return report;
}

// ---- Rendering ---------------------------------------------------------------

inline std::string format_number(double v, int precision = 3) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", precision, v);
  return buf;
}

inline std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

inline std::string count_table_csv(const std::vector<CategoryCount>& rows) {
  std::string out = "category,count\n";
  for (const auto& r : rows) out += csv_escape(r.category) + "," + std::to_string(r.count) + "\n";
  return out;
}

inline std::string count_table_text(const std::vector<CategoryCount>& rows) {
  std::string out;
  for (const auto& r : rows) {
    std::string label = r.id ? r.id->str() + " " + r.category : r.category;
    label.resize(std::max<std::size_t>(label.size(), 28), ' ');
    out += label + " " + std::to_string(r.count) + "\n";
  }
  return out;
}

inline std::string method_cell(Protocol p, std::size_t size) {
  return std::string(to_string(p)) + "/" + std::to_string(size);
}

inline std::string alpha_cell(const std::optional<double>& a) {
  return a ? format_number(*a, 6) : "unavailable";
}

// Columns: method,alpha,time_min,payment. `method` is "<A|B|C>/<task size>".
inline std::string cost_report_csv(const CostReport& r) {
  std::string out = "method,alpha,time_min,payment\n";
  for (const auto& row : r.rows)
    out += method_cell(row.protocol, row.task_size) + "," + alpha_cell(row.alpha) + "," +
           format_number(row.time_min, 2) + "," + format_number(row.payment, 2) + "\n";
  return out;
}

inline std::string cost_report_text(const CostReport& r) {
  std::string out = r.simulated ? "# simulated time and payment (rate model)\n" : "";
  out += "method  alpha      time_min  payment  q/image  tasks\n";
  for (const auto& row : r.rows) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "%-7s %-10s %8.2f  %7.2f  %7.2f  %5zu\n",
                   method_cell(row.protocol, row.task_size).c_str(), alpha_cell(row.alpha).c_str(),
                   row.time_min, row.payment, row.mean_questions_per_image, row.tasks);
    out += buf;
  }
  return out;
}

}  // namespace vislabel
