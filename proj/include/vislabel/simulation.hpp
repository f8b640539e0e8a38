#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "vislabel/campaign.hpp"
#include "vislabel/engine.hpp"
#include "vislabel/error.hpp"
#include "vislabel/event_log.hpp"
#include "vislabel/export.hpp"
#include "vislabel/hierarchy.hpp"
#include "vislabel/reliability.hpp"

namespace vislabel {

// ---- Randomness --------------------------------------------------------------

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

inline std::uint64_t mix_seed(std::initializer_list<std::uint64_t> parts) {
  std::uint64_t h = 0x243F6A8885A308D3ull;
  for (auto p : parts) h = splitmix64(h ^ p);
  return h;
}

// mt19937_64 is specified bit-exactly by the standard; the distributions are
// not, so the two we need are written out here.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  bool bernoulli(double p) { return uniform() < p; }
  std::size_t below(std::size_t n) {
    return static_cast<std::size_t>(uniform() * static_cast<double>(n)) % n;
  }
  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[below(i)]);
  }

 private:
  std::mt19937_64 engine_;
};

// ---- Corpus ------------------------------------------------------------------

// nullopt marks an out-of-scope image (matches no root).
using TruthLabel = std::optional<ConceptId>;

struct GroundTruth {
  std::map<std::string, TruthLabel> labels;

  const TruthLabel& at(const std::string& image_id) const {
    auto it = labels.find(image_id);
    if (it == labels.end()) throw NotFoundError("no ground truth for " + image_id);
    return it->second;
  }
  bool operator==(const GroundTruth&) const = default;
};

struct Corpus {
  std::vector<std::string> image_ids;
  GroundTruth truth;

  std::string fingerprint() const {
    std::uint64_t h = 1469598103934665603ull;
    auto feed = [&](const std::string& s) {
      for (char c : s) h = (h ^ static_cast<unsigned char>(c)) * 1099511628211ull;
      h = (h ^ 0xFF) * 1099511628211ull;
    };
    for (const auto& id : image_ids) {
      feed(id);
      const auto& t = truth.at(id);
      feed(t ? t->str() : "-");
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
  }
  bool operator==(const Corpus&) const = default;
};

// round(in * f / (1 - f)) out-of-scope images, so they make up about f of the corpus.
inline std::size_t out_of_scope_count(std::size_t in_scope, double fraction) {
  return static_cast<std::size_t>(
      std::llround(static_cast<double>(in_scope) * fraction / (1.0 - fraction)));
}

inline Corpus generate_synthetic_corpus(const Hierarchy& h, std::size_t n_per_leaf,
                                        double out_of_scope_fraction, std::uint64_t seed) {
  auto leaves = h.leaves();
  if (leaves.empty()) throw ConfigError("hierarchy has no leaves");
  if (n_per_leaf < 1) throw ConfigError("n_per_leaf must be at least 1");
  if (!(out_of_scope_fraction >= 0.0 && out_of_scope_fraction < 1.0))
    throw ConfigError("out-of-scope fraction must lie in [0, 1)");
  std::vector<TruthLabel> labels;
  for (const auto* leaf : leaves)
    for (std::size_t i = 0; i < n_per_leaf; ++i) labels.emplace_back(leaf->id);
  labels.resize(labels.size() + out_of_scope_count(labels.size(), out_of_scope_fraction));
  Rng rng(mix_seed({seed, 0xC0}));
  rng.shuffle(labels);

  Corpus c;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "img-%05zu", i + 1);
    c.image_ids.emplace_back(buf);
    c.truth.labels.emplace(buf, labels[i]);
  }
  return c;
}

// ---- Annotator model ---------------------------------------------------------

enum class Confusion { Uniform, SiblingWeighted };

struct AnnotatorModel {
  double answer_accuracy = 1.0;              // p
  double flat_accuracy = 1.0;                // q
  std::optional<std::uint32_t> knowledge_depth;  // d
  std::uint64_t seed = 0;
  std::map<Protocol, double> protocol_accuracy;  // per-protocol override of p
  Confusion confusion = Confusion::Uniform;

  void validate() const {
    auto in_unit = [](double v) { return v >= 0.0 && v <= 1.0; };
    if (!in_unit(answer_accuracy) || !in_unit(flat_accuracy))
      throw ConfigError("model accuracies must lie in [0, 1]");
    for (const auto& [p, v] : protocol_accuracy)
      if (!in_unit(v)) throw ConfigError("model accuracies must lie in [0, 1]");
    if (knowledge_depth && *knowledge_depth < 1) throw ConfigError("knowledge depth must be >= 1");
  }

  AnnotatorModel for_protocol(Protocol p) const {
    AnnotatorModel m = *this;
    if (auto it = protocol_accuracy.find(p); it != protocol_accuracy.end())
      m.answer_accuracy = it->second;
    return m;
  }

  static AnnotatorModel oracle(std::uint64_t seed = 0) {
    AnnotatorModel m;
    m.seed = seed;
    return m;
  }
};

namespace detail {

inline std::size_t common_prefix(const ConceptId& a, const ConceptId& b) {
  auto pa = a.path(), pb = b.path();
  std::size_t n = 0;
  while (n < pa.size() && n < pb.size() && pa[n] == pb[n]) ++n;
  return n;
}

inline Answer flat_answer(const AnnotatorModel& m, const TruthLabel& truth, const Question& q,
                          Rng& rng) {
  Answer truthful = truth ? Answer::pick(*truth) : Answer::none_of_these();
  bool honest = rng.bernoulli(m.flat_accuracy);
  std::vector<Answer> wrong;
  std::vector<double> weight;
  for (const auto& c : q.choices) {
    if (truth && c.id == *truth) continue;
    wrong.push_back(Answer::pick(c.id));
    weight.push_back(m.confusion == Confusion::SiblingWeighted && truth
                         ? 1.0 + static_cast<double>(common_prefix(c.id, *truth))
                         : 1.0);
  }
  if (q.offers_none_of_these && truth) {
    wrong.push_back(Answer::none_of_these());
    weight.push_back(1.0);
  }
  double pick = rng.uniform();
  if (honest || wrong.empty()) return truthful;
  double total = 0;
  for (double w : weight) total += w;
  double acc = 0;
  for (std::size_t i = 0; i < wrong.size(); ++i) {
    acc += weight[i] / total;
    if (pick < acc) return wrong[i];
  }
  return wrong.back();
}

}  // namespace detail

// Yes/no: truthful iff the subject is an ancestor-or-self of the true leaf,
// returned with probability p, flipped otherwise; beyond depth d always No.
// Flat choice: the true leaf (or none-of-these) with probability q. Draws a
// fixed number of variates per question kind so equal question sequences
// consume the stream identically.
inline Answer simulated_answer(const AnnotatorModel& model, const GroundTruth& truth,
                               const std::string& image_id, const Question& q, Rng& rng) {
  const auto& t = truth.at(image_id);
  if (q.kind == QuestionKind::FlatChoice) return detail::flat_answer(model, t, q, rng);
  bool honest = rng.bernoulli(model.answer_accuracy);
  const auto& subject = *q.subject;
  if (model.knowledge_depth && subject.depth() > *model.knowledge_depth) return Answer::no();
  bool truthful = t && subject.is_ancestor_or_self_of(*t);
  return Answer::yes_no(honest ? truthful : !truthful);
}

// Whether an outcome names the true category.
inline bool matches_truth(const LabelOutcome& o, const TruthLabel& t) {
  if (!t) return o.kind == OutcomeKind::Discharged;
  return o.kind == OutcomeKind::Classified && o.label == t;
}

// ---- Campaign driver ---------------------------------------------------------

struct SimOptions {
  std::size_t replication = kDefaultReplication;
  std::size_t escalation_cap = kDefaultEscalationCap;
  RateModel rates = RateModel::defaults();
};

struct SimRow {
  Protocol protocol = Protocol::MethodC;
  std::size_t task_size = 0;
  std::optional<double> alpha;        // observers = individual annotators
  std::optional<double> group_alpha;  // observers = annotator models
  double accuracy = 0.0;              // consensus labels matching truth / images
  double single_accuracy = 0.0;       // regular-pass votes matching truth / votes
  std::vector<CategoryCount> counts;
  double mean_questions = 0.0;
  std::uint32_t max_questions = 0;
  double time_min = 0.0;
  double payment = 0.0;
  std::size_t images = 0;
  std::size_t tasks = 0;
  std::size_t escalation_tasks = 0;
  std::size_t escalated_images = 0;
  std::size_t final_count = 0;
  std::size_t unresolved = 0;
  std::size_t annotators = 0;
  std::string corpus_fingerprint;
};

struct SimResult {
  EventLog log;
  CampaignState state;
  SimRow row;
  std::vector<SessionCost> costs;
};

// Annotator ids are "m<model>-<n>"; this recovers the model part.
inline std::string model_group(const std::string& annotator_id) {
  return annotator_id.substr(0, annotator_id.find('-'));
}

inline SimResult run_campaign(const Hierarchy& h, const Corpus& corpus,
                              const std::vector<AnnotatorModel>& models, Protocol protocol,
                              std::size_t task_size, std::uint64_t seed,
                              const SimOptions& opts = {}) {
  if (models.size() < opts.replication)
    throw ConfigError("need at least " + std::to_string(opts.replication) + " annotator models");
  for (const auto& m : models) m.validate();

  CampaignCreated created;
  created.campaign_id = "sim";
  created.settings = CampaignSettings{protocol, task_size, opts.replication, opts.escalation_cap};
  created.hierarchy = hierarchy_to_json(h);
  for (const auto& id : corpus.image_ids) {
    ImageRecord r;
    r.image_id = id;
    r.uri = "sim://" + id;
    created.images.push_back(std::move(r));
  }
  std::int64_t tick = 0;
  auto campaign = Campaign::create(std::move(created), EventLog{}, [&tick] { return ++tick; });

  std::vector<SessionCost> costs;
  std::size_t single_votes = 0, single_right = 0;
  auto work_remaining = [&](const CampaignState& s) {
    if (!s.escalation_pool().empty()) return true;
    for (const auto& [id, t] : s.tasks())
      if (t.completed_passes < t.passes_needed) return true;
    return false;
  };

  for (std::size_t n = 0; work_remaining(campaign.state()); ++n) {
    std::size_t k = n % models.size();
    auto model = models[k].for_protocol(protocol);
    auto annotator = "m" + std::to_string(k) + "-" + std::to_string(n + 1);
    campaign.register_annotator(annotator, "sim-token-" + std::to_string(n + 1));
    auto claim = campaign.claim(annotator);
    if (!claim) throw StateError("simulation stalled: work remains but nothing is claimable");
    bool regular = campaign.state().task(claim->task.task_id).kind == TaskKind::Regular;
    Rng rng(mix_seed({seed, model.seed, n}));
    for (const auto& img : claim->task.image_ids) {
      auto handle = campaign.open_session(annotator, claim->task.task_id, img);
      Step step = handle.step;
      while (const auto* q = std::get_if<Question>(&step))
        step = campaign.answer(handle.session_id, q->sequence_no,
                               simulated_answer(model, corpus.truth, img, *q, rng));
      const auto& outcome = std::get<LabelOutcome>(step);
      if (!regular) continue;
      costs.push_back({protocol, claim->task.task_id + "/" + annotator, task_size,
                       outcome.question_count});
      ++single_votes;
      single_right += matches_truth(outcome, corpus.truth.at(img));
    }
  }

  const auto& s = campaign.state();
  SimRow row;
  row.protocol = protocol;
  row.task_size = task_size;
  row.alpha = try_alpha(reliability_from_campaign(s)).value;
  row.group_alpha = try_alpha(reliability_from_campaign(s, false, model_group)).value;
  row.images = s.images().size();
  std::size_t right = 0;
  for (const auto& r : s.images()) {
    const auto& st = s.image_state(r.image_id);
    if (st.escalation_rounds > 0) ++row.escalated_images;
    if (st.status == ImageStatus::Final) {
      ++row.final_count;
      right += matches_truth(*st.final_label, corpus.truth.at(r.image_id));
    } else if (st.status == ImageStatus::Unresolved) {
      ++row.unresolved;
    }
  }
  row.accuracy = row.images ? static_cast<double>(right) / static_cast<double>(row.images) : 0.0;
  row.single_accuracy =
      single_votes ? static_cast<double>(single_right) / static_cast<double>(single_votes) : 0.0;
  row.counts = category_count_table(final_results(s), h, leaf_ids(h));
  for (const auto& [id, t] : s.tasks()) {
    if (t.kind == TaskKind::Regular)
      ++row.tasks;
    else
      ++row.escalation_tasks;
  }
  row.annotators = s.annotators().size();
  row.corpus_fingerprint = corpus.fingerprint();
  auto cost = cost_report(costs, opts.rates);
  if (!cost.rows.empty()) {
    row.time_min = cost.rows[0].time_min;
    row.payment = cost.rows[0].payment;
    row.mean_questions = cost.rows[0].mean_questions_per_image;
    row.max_questions = cost.rows[0].max_questions;
  }
  return {campaign.log().detached(), s, std::move(row), std::move(costs)};
}

// ---- Method comparison -------------------------------------------------------

struct DeltaRow {
  Protocol minuend = Protocol::MethodB;
  Protocol subtrahend = Protocol::MethodA;
  std::size_t task_size = 0;
  std::optional<double> alpha;
  double accuracy = 0.0;
  double time_min = 0.0;
  double payment = 0.0;
  double mean_questions = 0.0;

  std::string label() const {
    return std::string(to_string(minuend)) + "-" + std::string(to_string(subtrahend));
  }
};

struct SimReport {
  std::vector<SimRow> rows;  // ordered by task size, then protocol
  std::vector<DeltaRow> deltas;
  std::string corpus_fingerprint;
};

inline DeltaRow row_delta(const SimRow& a, const SimRow& b) {
  DeltaRow d;
  d.minuend = a.protocol;
  d.subtrahend = b.protocol;
  d.task_size = a.task_size;
  if (a.alpha && b.alpha) d.alpha = *a.alpha - *b.alpha;
  d.accuracy = a.accuracy - b.accuracy;
  d.time_min = a.time_min - b.time_min;
  d.payment = a.payment - b.payment;
  d.mean_questions = a.mean_questions - b.mean_questions;
  return d;
}

// Orders rows, checks they share one corpus and derives B-A, C-B, C-A per size.
inline SimReport assemble_report(std::vector<SimRow> rows) {
  SimReport report;
  if (rows.empty()) return report;
  for (const auto& r : rows)
    if (r.corpus_fingerprint != rows.front().corpus_fingerprint)
      throw ConfigError("report rows were produced from different corpora");
  std::stable_sort(rows.begin(), rows.end(), [](const SimRow& a, const SimRow& b) {
    return std::pair(a.task_size, a.protocol) < std::pair(b.task_size, b.protocol);
  });
  report.corpus_fingerprint = rows.front().corpus_fingerprint;
  std::map<std::pair<std::size_t, Protocol>, const SimRow*> index;
  for (const auto& r : rows) {
    if (!index.emplace(std::pair(r.task_size, r.protocol), &r).second)
      throw ConfigError("duplicate report row " + method_cell(r.protocol, r.task_size));
  }
  static constexpr std::pair<Protocol, Protocol> kPairs[] = {
      {Protocol::MethodB, Protocol::MethodA},
      {Protocol::MethodC, Protocol::MethodB},
      {Protocol::MethodC, Protocol::MethodA}};
  std::set<std::size_t> sizes;
  for (const auto& r : rows) sizes.insert(r.task_size);
  for (auto size : sizes)
    for (auto [x, y] : kPairs) {
      auto a = index.find({size, x}), b = index.find({size, y});
      if (a != index.end() && b != index.end())
        report.deltas.push_back(row_delta(*a->second, *b->second));
    }
  report.rows = std::move(rows);
  return report;
}

struct SimConfig {
  Hierarchy hierarchy;
  std::size_t n_per_leaf = 100;
  double out_of_scope_fraction = 0.0;
  std::uint64_t corpus_seed = 1;
  std::vector<AnnotatorModel> models;
  std::vector<Protocol> protocols{Protocol::MethodA, Protocol::MethodB, Protocol::MethodC};
  std::vector<std::size_t> sizes{50, 100};
  std::uint64_t seed = 1;
  SimOptions options;
};

// Every (protocol, size) cell runs on the same corpus, models and seed, so
// row differences come from the protocol alone.
inline SimReport run_method_comparison(const SimConfig& cfg) {
  auto corpus = generate_synthetic_corpus(cfg.hierarchy, cfg.n_per_leaf,
                                          cfg.out_of_scope_fraction, cfg.corpus_seed);
  std::vector<SimRow> rows;
  for (auto size : cfg.sizes)
    for (auto p : cfg.protocols)
      rows.push_back(
          run_campaign(cfg.hierarchy, corpus, cfg.models, p, size, cfg.seed, cfg.options).row);
  return assemble_report(std::move(rows));
}

// ---- Config ------------------------------------------------------------------

namespace detail {

inline AnnotatorModel model_from_json(const json& j) {
  AnnotatorModel m;
  m.answer_accuracy = j.value("answer_accuracy", 1.0);
  m.flat_accuracy = j.value("flat_accuracy", m.answer_accuracy);
  if (j.contains("knowledge_depth") && !j["knowledge_depth"].is_null())
    m.knowledge_depth = j["knowledge_depth"].get<std::uint32_t>();
  m.seed = j.value("seed", std::uint64_t{0});
  if (j.contains("protocol_accuracy"))
    for (const auto& [k, v] : j["protocol_accuracy"].items())
      m.protocol_accuracy[parse_protocol(k)] = v.get<double>();
  auto confusion = j.value("confusion", std::string("uniform"));
  if (confusion == "uniform")
    m.confusion = Confusion::Uniform;
  else if (confusion == "sibling_weighted")
    m.confusion = Confusion::SiblingWeighted;
  else
    throw ConfigError("unknown confusion \"" + confusion + "\"");
  m.validate();
  return m;
}

}  // namespace detail

// Hierarchy may be inline or a path relative to `base_dir`.
inline SimConfig sim_config_from_json(const json& j, const std::filesystem::path& base_dir = {}) {
  try {
    SimConfig c;
    const auto& hj = j.at("hierarchy");
    if (hj.is_string()) {
      auto path = base_dir / hj.get<std::string>();
      std::ifstream in(path);
      if (!in) throw ConfigError("cannot read hierarchy " + path.string());
      std::stringstream ss;
      ss << in.rdbuf();
      c.hierarchy = parse_hierarchy(ss.str());
    } else {
      c.hierarchy = hierarchy_from_json(hj);
    }
    if (j.contains("corpus")) {
      const auto& cj = j["corpus"];
      c.n_per_leaf = cj.value("n_per_leaf", c.n_per_leaf);
      c.out_of_scope_fraction = cj.value("out_of_scope_fraction", 0.0);
      c.corpus_seed = cj.value("seed", c.corpus_seed);
    }
    for (const auto& m : j.at("models")) c.models.push_back(detail::model_from_json(m));
    if (j.contains("protocols")) {
      c.protocols.clear();
      for (const auto& p : j["protocols"]) c.protocols.push_back(parse_protocol(p.get<std::string>()));
    }
    if (j.contains("sizes")) c.sizes = j["sizes"].get<std::vector<std::size_t>>();
    c.seed = j.value("seed", c.seed);
    c.options.replication = j.value("replication", c.options.replication);
    c.options.escalation_cap = j.value("escalation_cap", c.options.escalation_cap);
    if (j.contains("rates")) {
      const auto& rj = j["rates"];
      if (rj.contains("seconds_per_question"))
        for (const auto& [k, v] : rj["seconds_per_question"].items())
          c.options.rates.seconds_per_question[parse_protocol(k)] = v.get<double>();
      if (rj.contains("payment_per_task"))
        for (const auto& e : rj["payment_per_task"])
          c.options.rates.payment_per_task[{parse_protocol(e.at("method").get<std::string>()),
                                            e.at("size").get<std::size_t>()}] =
              e.at("payment").get<double>();
    }
    if (c.models.size() < c.options.replication)
      throw ConfigError("need at least " + std::to_string(c.options.replication) + " models");
    return c;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("simulation config: ") + e.what());
  }
}

inline SimConfig load_sim_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return sim_config_from_json(detail::parse_json_text(ss.str()), path.parent_path());
}

// ---- Rendering ---------------------------------------------------------------

inline std::string yes_no_cell(bool b) { return b ? "yes" : "no"; }

inline std::string signed_number(double v) {
  auto s = format_number(v);
  return v > 0 ? "+" + s : s;
}

// Ablation-shaped table: one row per (method, size) then the delta rows.
inline std::string sim_report_csv(const SimReport& r) {
  std::string out =
      "method,size,hierarchy,visual_properties,alpha,accuracy,time_min,payment,"
      "mean_questions\n";
  for (const auto& row : r.rows)
    out += std::string(to_string(row.protocol)) + "," + std::to_string(row.task_size) + "," +
           yes_no_cell(uses_hierarchy(row.protocol)) + "," +
           yes_no_cell(uses_visual_properties(row.protocol)) + "," + alpha_cell(row.alpha) + "," +
           format_number(row.accuracy) + "," + format_number(row.time_min) + "," +
           format_number(row.payment) + "," + format_number(row.mean_questions) + "\n";
  for (const auto& d : r.deltas)
    out += "delta(" + d.label() + ")," + std::to_string(d.task_size) + ",,," +
           (d.alpha ? signed_number(*d.alpha) : std::string("n/a")) + "," +
           signed_number(d.accuracy) + "," + signed_number(d.time_min) + "," +
           signed_number(d.payment) + "," + signed_number(d.mean_questions) + "\n";
  return out;
}

inline std::string sim_report_text(const SimReport& r) {
  std::ostringstream out;
  char buf[256];
  out << "Simulated method comparison (rate-model times, not human measurements)\n";
  out << "corpus " << r.corpus_fingerprint << "\n\n";
  std::snprintf(buf, sizeof buf, "%-8s %-9s %-7s %-7s %-8s %-9s %-8s %-6s %-6s\n", "method",
                "hierarchy", "visual", "alpha", "accuracy", "time_min", "payment", "escal",
                "unres");
  out << buf;
  for (const auto& row : r.rows) {
    std::snprintf(buf, sizeof buf, "%-8s %-9s %-7s %-7s %-8s %-9s %-8s %-6zu %-6zu\n",
                  method_cell(row.protocol, row.task_size).c_str(),
                  yes_no_cell(uses_hierarchy(row.protocol)).c_str(),
                  yes_no_cell(uses_visual_properties(row.protocol)).c_str(),
                  alpha_cell(row.alpha).c_str(), format_number(row.accuracy).c_str(),
                  format_number(row.time_min).c_str(), format_number(row.payment).c_str(),
                  row.escalated_images, row.unresolved);
    out << buf;
  }
  for (const auto& d : r.deltas) {
    auto name = "d(" + d.label() + ")/" + std::to_string(d.task_size);
    std::snprintf(buf, sizeof buf, "%-8s %-9s %-7s %-7s %-8s %-9s %-8s\n", name.c_str(), "", "",
                  d.alpha ? signed_number(*d.alpha).c_str() : "n/a",
                  signed_number(d.accuracy).c_str(), signed_number(d.time_min).c_str(),
                  signed_number(d.payment).c_str());
    out << buf;
  }
  for (const auto& row : r.rows) {
    out << "\ncounts " << method_cell(row.protocol, row.task_size) << "\n";
    out << count_table_text(row.counts);
  }
  return out.str();
}

}  // namespace vislabel
