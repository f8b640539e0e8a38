// vislabel: command-line front end for hierarchies, manifests, campaigns,
// simulation and reliability.

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "vislabel/export.hpp"
#include "vislabel/http.hpp"
#include "vislabel/reliability.hpp"
#include "vislabel/service.hpp"
#include "vislabel/simulation.hpp"

namespace fs = std::filesystem;
using namespace vislabel;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void emit(const std::string& text, const std::string& out_path) {
  if (out_path.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream out(out_path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + out_path);
  out << text;
}

int validate_hierarchy(const std::string& path) {
  auto h = parse_hierarchy(slurp(path));
  std::cout << "ok: " << h.size() << " categories, " << h.leaves().size()
            << " leaves, at most " << question_upper_bound(h) << " questions per image\n";
  return 0;
}

int ingest(const std::string& manifest, const std::string& detections, double min_confidence,
           const std::string& out_path) {
  auto records = ingest_manifest(slurp(manifest));
  if (detections.empty()) {
    emit(serialize_manifest(records), out_path);
    std::cerr << records.size() << " records\n";
    return 0;
  }
  std::map<std::string, DetectionRecord> by_image;
  for (auto& d : parse_detections(slurp(detections))) by_image.emplace(d.image_id, std::move(d));
  std::vector<ImageRecord> out;
  std::size_t promoted = 0, dropped = 0;
  for (const auto& r : records) {
    auto it = by_image.find(r.image_id);
    if (it == by_image.end()) {
      out.push_back(r);
      continue;
    }
    auto crops = apply_localization(r, it->second.boxes, min_confidence);
    if (crops.empty()) ++dropped;
    promoted += crops.size();
    out.insert(out.end(), crops.begin(), crops.end());
  }
  emit(serialize_manifest(out), out_path);
  std::cerr << out.size() << " records (" << promoted << " crops, " << dropped
            << " images without a usable box)\n";
  return 0;
}

int simulate(const std::string& config, std::optional<std::uint64_t> seed,
             const std::string& format) {
  auto cfg = load_sim_config(config);
  if (seed) cfg.seed = *seed;
  auto report = run_method_comparison(cfg);
  std::cout << (format == "csv" ? sim_report_csv(report) : sim_report_text(report));
  return 0;
}

int alpha(const std::string& path) {
  auto data = parse_reliability_csv(slurp(path));
  std::cout << json(krippendorff_alpha_nominal(data)).dump() << "\n";
  return 0;
}

int export_log(const std::string& log_path, const std::string& out_path, bool unresolved) {
  auto log = EventLog::parse(slurp(log_path));
  auto state = replay_state(log);
  auto rows = export_dataset(state, state.hierarchy(), {unresolved});
  emit(serialize_export(rows), out_path);
  std::cerr << rows.size() << " rows\n";
  return 0;
}

int serve(const std::string& config, const std::string& host, int port, std::string data_dir) {
  if (data_dir.empty())
    if (const char* env = std::getenv("VISLABEL_DATA_DIR")) data_dir = env;
  ServiceOptions opts;
  opts.data_dir = data_dir;
  if (!config.empty()) opts.base_dir = fs::path(config).parent_path();
  AnnotationService service(std::move(opts));
  if (!config.empty() && service.campaign_ids().empty()) {
    auto id = service.create_campaign(
        campaign_from_config(detail::parse_json_text(slurp(config)), fs::path(config).parent_path()));
    std::cerr << "created campaign " << id << "\n";
  }
  std::cerr << "listening on " << host << ":" << port
            << (data_dir.empty() ? " (in-memory)" : " data dir " + data_dir) << "\n";
  return serve(service, host, port) ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"vislabel: visual-property-guided image annotation"};
  app.require_subcommand(1);

  std::string path, manifest, detections, out, config, log_path, format = "text",
                                                              host = "127.0.0.1";
  double min_confidence = 0.5;
  int port = 8080;
  std::optional<std::uint64_t> seed;
  bool unresolved = false;

  auto* vh = app.add_subcommand("validate-hierarchy", "check a hierarchy document");
  vh->add_option("file", path, "hierarchy JSON")->required();

  auto* in = app.add_subcommand("ingest", "validate a manifest, optionally applying detector boxes");
  in->add_option("--manifest", manifest, "newline-delimited image records")->required();
  in->add_option("--detections", detections, "newline-delimited detector output");
  in->add_option("--min-confidence", min_confidence, "box confidence threshold");
  in->add_option("-o,--out", out, "output manifest (default stdout)");

  auto* sv = app.add_subcommand("serve", "run the HTTP service");
  sv->add_option("--config", config, "campaign config to create on first start");
  sv->add_option("--host", host);
  sv->add_option("--port", port);
  sv->add_option("--log-path", log_path, "data directory for event logs (env VISLABEL_DATA_DIR)");

  auto* sim = app.add_subcommand("simulate", "run the method comparison");
  sim->add_option("--config", config, "simulation config")->required();
  sim->add_option("--seed", seed, "override the campaign seed");
  sim->add_option("--format", format)->check(CLI::IsMember({"text", "csv"}));

  auto* al = app.add_subcommand("alpha", "nominal Krippendorff's alpha of a unit,observer,value CSV");
  al->add_option("file", path)->required();

  auto* ex = app.add_subcommand("export", "export the labelled dataset from an event log");
  ex->add_option("--log-path", log_path, "campaign event log")->required();
  ex->add_option("-o,--out", out);
  ex->add_flag("--include-unresolved", unresolved);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*vh) return validate_hierarchy(path);
    if (*in) return ingest(manifest, detections, min_confidence, out);
    if (*sv) return serve(config, host, port, log_path);
    if (*sim) return simulate(config, seed, format);
    if (*al) return alpha(path);
    if (*ex) return export_log(log_path, out, unresolved);
  } catch (const ValidationError& e) {
    std::cerr << "invalid: " << e.what() << "\n";
    return 1;
  } catch (const Error& e) {
    std::cerr << "error [" << e.code() << "]: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
