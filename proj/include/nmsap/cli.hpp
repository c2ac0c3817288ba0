#pragma once

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <openssl/evp.h>

#include <CLI11.hpp>
#include <json.hpp>

#include "nmsap/adversary.hpp"
#include "nmsap/analysis.hpp"
#include "nmsap/api.hpp"
#include "nmsap/hardneg.hpp"

namespace nmsap::cli {

inline constexpr const char* kToolVersion = "1.0.0";

enum ExitCode : int { kOk = 0, kValidation = 1, kUsage = 2 };

/// Lowercase hex SHA-256 of a file's bytes.
inline std::string sha256_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot read '" + path + "'");
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr);
  std::vector<char> buf(1 << 16);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (in.gcount() > 0) EVP_DigestUpdate(ctx.get(), buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx.get(), md, &len);
  std::ostringstream hex;
  for (unsigned i = 0; i < len; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << int(md[i]);
  return hex.str();
}

/// Subcommand, resolved config, input digests, tool version. Wall-clock time
/// is kept apart so identical runs serialize identically.
struct RunManifest {
  std::string subcommand;
  nlohmann::json config = nlohmann::json::object();
  std::map<std::string, std::string> inputs;  // path -> sha256
  double wall_clock_ms = 0.0;

  void add_input(const std::string& path) { inputs[path] = sha256_file(path); }

  nlohmann::json canonical() const {
    return {{"subcommand", subcommand},
            {"config", config},
            {"inputs", inputs},
            {"tool_version", kToolVersion}};
  }
};

struct Context {
  std::ostream& out;
  std::ostream& err;
  bool quiet = false;
};

namespace detail {

inline std::string env(const char* name) {
  const char* v = std::getenv(name);
  return v ? std::string(v) : std::string();
}

inline unsigned default_threads() {
  if (const auto v = env("NMSAP_THREADS"); !v.empty()) {
    try {
      const int n = std::stoi(v);
      if (n > 0) return static_cast<unsigned>(n);
    } catch (const std::exception&) {
    }
    throw Error(ErrorKind::Usage, "NMSAP_THREADS must be a positive integer, got '" + v + "'");
  }
  return Execution::hardware().threads;
}

inline std::string resolve_output(const std::string& path) {
  if (path == "-") return path;
  const std::filesystem::path p(path);
  if (p.is_absolute()) return path;
  if (const auto dir = env("NMSAP_OUTPUT_DIR"); !dir.empty()) {
    return (std::filesystem::path(dir) / p).string();
  }
  return path;
}

inline void write_text(Context& ctx, const std::string& path, const std::string& body) {
  if (path == "-") {
    ctx.out << body;
    return;
  }
  const auto target = resolve_output(path);
  const auto parent = std::filesystem::path(target).parent_path();
  if (!parent.empty()) {
    std::error_code ec;
    std::filesystem::create_directories(parent, ec);
  }
  std::ofstream f(target, std::ios::binary);
  if (!f) throw Error(ErrorKind::Io, "cannot write '" + target + "'");
  f << body;
}

inline void write_json(Context& ctx, const std::string& path, const nlohmann::json& j) {
  write_text(ctx, path, j.dump(2) + "\n");
}

inline nlohmann::json read_json(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot read '" + path + "'");
  return nmsap::detail::parse(in);
}

inline std::vector<std::string> read_lines_or_array(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot read '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  const auto body = buf.str();
  const auto first = body.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && body[first] == '[') {
    try {
      return nlohmann::json::parse(body).get<std::vector<std::string>>();
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::Parse, "'" + path + "': " + e.what());
    }
  }
  std::vector<std::string> lines;
  std::istringstream ls(body);
  for (std::string line; std::getline(ls, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!text::normalize(line).empty()) lines.push_back(line);
  }
  return lines;
}

/// Flags shared by evaluate and compare. Values stay unset unless given so a
/// --config file can supply them.
struct MetricFlags {
  std::string config_path;
  std::string iou_thresholds;
  std::string nms_mode;
  double nms_iou = 0.5;
  double gt_overlap = 0.5;
  std::size_t max_dets = 100;
  std::size_t recall_points = 101;
  double score_floor = 0.0;
  unsigned threads = 0;
  CLI::Option* o_nms_iou = nullptr;
  CLI::Option* o_gt_overlap = nullptr;
  CLI::Option* o_max_dets = nullptr;
  CLI::Option* o_recall_points = nullptr;
  CLI::Option* o_score_floor = nullptr;

  void attach(CLI::App* app) {
    app->add_option("--config", config_path, "JSON config file; flags override its values");
    app->add_option("--iou-thresholds", iou_thresholds, "start:stop:step (default 0.5:0.95:0.05)");
    app->add_option("--nms-mode", nms_mode, "greedy-nms or keep-top-1")
        ->check(CLI::IsMember({"greedy-nms", "keep-top-1"}));
    o_nms_iou = app->add_option("--nms-iou", nms_iou, "greedy-nms suppression IoU");
    o_gt_overlap = app->add_option("--gt-overlap", gt_overlap, "IoU needed to join a GT group");
    o_max_dets = app->add_option("--max-dets", max_dets, "detections kept per image and category");
    o_recall_points = app->add_option("--recall-points", recall_points, "interpolation grid size");
    o_score_floor = app->add_option("--score-floor", score_floor, "drop predictions below this");
    app->add_option("--threads", threads, "worker threads (default: NMSAP_THREADS or all cores)");
  }

  RunConfig resolve() const {
    RunConfig c;
    bool threads_from_file = false;
    if (!config_path.empty()) {
      const auto j = read_json(config_path);
      c = run_config_from_json(j, c);
      threads_from_file = j.is_object() && j.contains("threads");
    }
    if (!iou_thresholds.empty()) c.eval.iou_thresholds = parse_threshold_range(iou_thresholds);
    if (!nms_mode.empty()) c.nms.mode = parse_suppression_mode(nms_mode);
    if (o_nms_iou->count()) c.nms.nms_iou = nms_iou;
    if (o_gt_overlap->count()) c.nms.gt_overlap_threshold = gt_overlap;
    if (o_max_dets->count()) c.eval.max_dets = max_dets;
    if (o_recall_points->count()) c.eval.recall_points = recall_points;
    if (o_score_floor->count()) c.eval.score_floor = score_floor;
    if (threads > 0) {
      c.exec.threads = threads;
    } else if (!threads_from_file) {
      c.exec.threads = default_threads();
    }
    c.eval.validate();
    c.nms.validate();
    return c;
  }
};

inline ConfidenceModel parse_confidence(const std::string& s) {
  const auto colon = s.find(':');
  const auto model = s.substr(0, colon);
  std::vector<double> values;
  if (colon != std::string::npos) {
    std::stringstream ss(s.substr(colon + 1));
    for (std::string item; std::getline(ss, item, ',');) {
      try {
        values.push_back(std::stod(item));
      } catch (const std::exception&) {
        throw Error(ErrorKind::Usage, "bad number '" + item + "' in --confidence");
      }
    }
  }
  if (model == "fixed" && !values.empty()) return FixedScores{values};
  if (model == "uniform" && values.size() == 2) return UniformScores{values[0], values[1]};
  if (model == "label-advantage" && values.size() == 2) return LabelAdvantage{values[0], values[1]};
  throw Error(ErrorKind::Usage,
              "--confidence must be fixed:s1,s2,... | uniform:low,high | label-advantage:base,delta");
}

inline std::vector<VerbForms> read_verbs(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot read '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  const auto body = buf.str();
  std::vector<VerbForms> verbs;
  const auto first = body.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && body[first] == '[') {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(body);
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::Parse, "'" + path + "': " + e.what());
    }
    for (const auto& v : j) {
      if (v.is_string()) {
        verbs.push_back({v.get<std::string>(), participle_of(v.get<std::string>())});
      } else if (v.is_object() && v.contains("gerund")) {
        const auto g = v.at("gerund").get<std::string>();
        verbs.push_back({g, v.value("participle", participle_of(g))});
      } else {
        throw Error(ErrorKind::Schema, "verb entries must be strings or {gerund, participle}");
      }
    }
    return verbs;
  }
  for (const auto& g : read_lines_or_array(path)) verbs.push_back({g, participle_of(g)});
  return verbs;
}

}  // namespace detail

/// Runs one command line (without the program name). Never throws.
inline int run(std::vector<std::string> args, std::ostream& out = std::cout,
               std::ostream& err = std::cerr) {
  CLI::App app{"Detection metrics: COCO-style AP, NMS-AP, adversaries and hard negatives", "nmsap"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolVersion);

  Context ctx{out, err};
  std::string out_path = "-";
  bool quiet = false;
  auto common = [&](CLI::App* sub) {
    sub->add_option("--out", out_path, "output file, '-' for stdout");
    sub->add_flag("--quiet", quiet, "suppress progress messages");
  };

  std::string gt_path, pred_path;

  // evaluate
  auto* evaluate_cmd = app.add_subcommand("evaluate", "AP or NMS-AP of predictions against ground truth");
  std::string metric = "ap";
  bool curves = false;
  detail::MetricFlags eval_flags;
  evaluate_cmd->add_option("--gt", gt_path, "COCO instances JSON")->required();
  evaluate_cmd->add_option("--pred", pred_path, "COCO results JSON")->required();
  evaluate_cmd->add_option("--metric", metric, "ap, nms-ap or both")
      ->check(CLI::IsMember({"ap", "nms-ap", "both"}));
  evaluate_cmd->add_flag("--curves", curves, "include PR curves in the output");
  eval_flags.attach(evaluate_cmd);
  common(evaluate_cmd);

  // compare
  auto* compare_cmd = app.add_subcommand("compare", "AP and NMS-AP side by side with their gap");
  std::string name, aspect;
  detail::MetricFlags compare_flags;
  compare_cmd->add_option("--gt", gt_path, "COCO instances JSON")->required();
  compare_cmd->add_option("--pred", pred_path, "COCO results JSON")->required();
  compare_cmd->add_option("--name", name, "sub-dataset name recorded for `report`");
  compare_cmd->add_option("--aspect", aspect, "aspect recorded for `report`");
  compare_flags.attach(compare_cmd);
  common(compare_cmd);

  // simulate
  auto* simulate_cmd = app.add_subcommand("simulate", "synthetic detector output as COCO results JSON");
  std::string spec_path, kind, labels_policy, scope, confidence;
  std::size_t boxes_per_gt = 1;
  double jitter = 0, fp_rate = 0, dropout = 0;
  std::uint64_t seed = 0;
  simulate_cmd->add_option("--gt", gt_path, "COCO instances JSON")->required();
  simulate_cmd->add_option("--spec", spec_path, "DetectorSpec JSON; flags override");
  simulate_cmd->add_option("--kind", kind)->check(CLI::IsMember({"perfect", "deceptive", "noisy"}));
  auto* o_boxes = simulate_cmd->add_option("--boxes-per-gt", boxes_per_gt);
  simulate_cmd->add_option("--labels", labels_policy)
      ->check(CLI::IsMember({"correct", "all-candidates", "random"}));
  simulate_cmd->add_option("--scope", scope)->check(CLI::IsMember({"same-image", "full-vocabulary"}));
  simulate_cmd->add_option("--confidence", confidence,
                           "fixed:s1,s2,... | uniform:low,high | label-advantage:base,delta");
  auto* o_jitter = simulate_cmd->add_option("--jitter", jitter);
  auto* o_fp = simulate_cmd->add_option("--fp-rate", fp_rate);
  auto* o_drop = simulate_cmd->add_option("--dropout", dropout);
  auto* o_seed = simulate_cmd->add_option("--seed", seed);
  common(simulate_cmd);

  // gen-hardneg
  auto* hardneg_cmd = app.add_subcommand("gen-hardneg", "hard-negative labels for one aspect");
  std::string aspect_name, labels_path, vocab_path;
  std::size_t cap = 0;
  hardneg_cmd->add_option("--aspect", aspect_name)
      ->required()
      ->check(CLI::IsMember({"color", "material", "relationship", "position", "negation"}));
  hardneg_cmd->add_option("--labels", labels_path, "positive labels: JSON array or one per line")
      ->required();
  hardneg_cmd->add_option("--vocab", vocab_path, "substitution vocabulary (default built in)");
  hardneg_cmd->add_option("--cap", cap, "maximum negatives per label");
  common(hardneg_cmd);

  // stats
  auto* stats_cmd = app.add_subcommand("stats", "dataset statistics");
  std::string negatives_path;
  stats_cmd->add_option("--gt", gt_path, "COCO instances JSON")->required();
  stats_cmd->add_option("--negatives", negatives_path, "label -> negatives JSON");
  common(stats_cmd);

  // analyze
  auto* analyze_cmd = app.add_subcommand("analyze", "confidence distributions of well-localized predictions");
  double iou_min = 0.9;
  std::size_t bins = 20;
  std::string csv_path, svg_path;
  analyze_cmd->add_option("--gt", gt_path, "COCO instances JSON")->required();
  analyze_cmd->add_option("--pred", pred_path, "COCO results JSON")->required();
  analyze_cmd->add_option("--iou-min", iou_min, "IoU gate (strictly greater)");
  analyze_cmd->add_option("--bins", bins, "histogram bins over [0, 1]");
  analyze_cmd->add_option("--csv", csv_path, "also write the histograms as CSV");
  common(analyze_cmd);

  // report
  auto* report_cmd = app.add_subcommand("report", "aspect report from a directory of compare outputs");
  std::string results_dir;
  report_cmd->add_option("--results", results_dir, "directory of compare JSON files")->required();
  report_cmd->add_option("--csv", csv_path, "also write the table as CSV");
  report_cmd->add_option("--svg", svg_path, "also write a radar chart as SVG");
  common(report_cmd);

  std::reverse(args.begin(), args.end());
  try {
    app.parse(std::move(args));
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    err << prefix(ErrorKind::Usage) << e.what() << "\n";
    return kUsage;
  }
  ctx.quiet = quiet;

  const auto started = std::chrono::steady_clock::now();
  RunManifest manifest;
  try {
    nlohmann::json result;
    bool embed_manifest = true;

    if (evaluate_cmd->parsed()) {
      manifest.subcommand = "evaluate";
      const auto config = eval_flags.resolve();
      const auto m = parse_metric(metric);
      manifest.config = to_json(config);
      manifest.config["metric"] = metric;
      manifest.add_input(gt_path);
      manifest.add_input(pred_path);
      const auto gt = load_ground_truth_file(gt_path);
      const auto preds = load_predictions_file(pred_path, gt);
      if (curves && m != Metric::Both) {
        result = m == Metric::Ap
                     ? to_json(evaluate(gt, preds, config.eval, config.exec), true)
                     : to_json(nms_ap_evaluate(gt, preds, config.nms, config.eval, config.exec), true);
      } else {
        result = evaluate_sets(gt, preds, m, config);
      }
    } else if (compare_cmd->parsed()) {
      manifest.subcommand = "compare";
      const auto config = compare_flags.resolve();
      manifest.config = to_json(config);
      manifest.add_input(gt_path);
      manifest.add_input(pred_path);
      result = compare_files(gt_path, pred_path, config);
      if (!name.empty()) result["name"] = name;
      if (!aspect.empty()) result["aspect"] = aspect;
    } else if (simulate_cmd->parsed()) {
      manifest.subcommand = "simulate";
      DetectorSpec spec;
      if (!spec_path.empty()) {
        manifest.add_input(spec_path);
        spec = detector_spec_from_json(detail::read_json(spec_path));
      }
      nlohmann::json overrides = nlohmann::json::object();
      if (!kind.empty()) overrides["kind"] = kind;
      if (!labels_policy.empty()) overrides["labels"] = labels_policy;
      if (!scope.empty()) overrides["scope"] = scope;
      if (o_boxes->count()) overrides["boxes_per_gt"] = boxes_per_gt;
      if (o_jitter->count()) overrides["jitter"] = jitter;
      if (o_fp->count()) overrides["fp_rate"] = fp_rate;
      if (o_drop->count()) overrides["dropout"] = dropout;
      if (o_seed->count()) overrides["seed"] = seed;
      spec = detector_spec_from_json(overrides, spec);
      if (!confidence.empty()) {
        spec.confidence = detail::parse_confidence(confidence);
        spec.validate();
      }
      manifest.config = to_json(spec);
      manifest.add_input(gt_path);
      result = simulate_file(gt_path, spec);
      embed_manifest = false;
    } else if (hardneg_cmd->parsed()) {
      manifest.subcommand = "gen-hardneg";
      auto rules = NegativeRuleSet::defaults(parse_aspect(aspect_name));
      if (!vocab_path.empty()) {
        manifest.add_input(vocab_path);
        if (rules.aspect == Aspect::Relationship) {
          rules.verbs = detail::read_verbs(vocab_path);
        } else {
          rules.vocabulary = detail::read_lines_or_array(vocab_path);
        }
      }
      if (cap > 0) rules.cap = cap;
      rules.validate();
      manifest.add_input(labels_path);
      nlohmann::json negatives = nlohmann::json::object();
      nlohmann::json inapplicable = nlohmann::json::array();
      nlohmann::json review = nlohmann::json::array();
      for (const auto& label : detail::read_lines_or_array(labels_path)) {
        const auto outcome = gen_negatives(label, rules);
        if (!outcome.applicable) {
          inapplicable.push_back(label);
          continue;
        }
        negatives[label] = outcome.negatives;
        if (outcome.needs_review) review.push_back(label);
      }
      manifest.config = {{"aspect", aspect_name},
                         {"cap", cap > 0 ? nlohmann::json(cap) : nlohmann::json(nullptr)}};
      result = {{"aspect", aspect_name},
                {"negatives", negatives},
                {"inapplicable", inapplicable},
                {"review", review}};
    } else if (stats_cmd->parsed()) {
      manifest.subcommand = "stats";
      manifest.add_input(gt_path);
      const auto gt = load_ground_truth_file(gt_path);
      std::optional<NegativeMap> negatives;
      if (!negatives_path.empty()) {
        manifest.add_input(negatives_path);
        negatives = negative_map_from_json(detail::read_json(negatives_path));
      }
      result = to_json(compute_stats(gt, negatives ? &*negatives : nullptr));
    } else if (analyze_cmd->parsed()) {
      manifest.subcommand = "analyze";
      if (!(iou_min >= 0.0 && iou_min < 1.0)) throw Error(ErrorKind::Usage, "--iou-min must lie in [0, 1)");
      manifest.config = {{"iou_min", iou_min}, {"bins", bins}};
      manifest.add_input(gt_path);
      manifest.add_input(pred_path);
      const auto gt = load_ground_truth_file(gt_path);
      const auto preds = load_predictions_file(pred_path, gt);
      const auto dist = confidence_distribution(gt, preds, iou_min, same_label, bins);
      result = to_json(dist);
      if (!csv_path.empty()) detail::write_text(ctx, csv_path, to_csv(dist));
    } else if (report_cmd->parsed()) {
      manifest.subcommand = "report";
      std::vector<std::filesystem::path> files;
      std::error_code ec;
      for (const auto& entry : std::filesystem::directory_iterator(results_dir, ec)) {
        if (entry.is_regular_file() && entry.path().extension() == ".json") files.push_back(entry.path());
      }
      if (ec) throw Error(ErrorKind::Io, "cannot list '" + results_dir + "'");
      std::sort(files.begin(), files.end());
      std::vector<SubtaskResult> subtasks;
      for (const auto& f : files) {
        const auto j = detail::read_json(f.string());
        if (!j.is_object() || !j.contains("ap") || !j.contains("nms_ap") || !j.at("ap").is_number() ||
            !j.at("nms_ap").is_number()) {
          continue;  // not a compare output
        }
        manifest.add_input(f.string());
        const auto sub_name = j.value("name", f.stem().string());
        const auto sub_aspect = j.value("aspect", default_aspect(sub_name));
        const auto config = eval_config_from_json(j.value("config", nlohmann::json::object()));
        const auto nms_side = j.contains("nms_eval_config")
                                  ? eval_config_from_json(j.at("nms_eval_config"))
                                  : config;
        subtasks.push_back({sub_name, sub_aspect, j.at("nms_ap").get<double>(),
                            j.at("ap").get<double>(), nms_side, config});
      }
      if (subtasks.empty()) throw Error(ErrorKind::Validation, "no compare outputs in '" + results_dir + "'");
      const auto report = aspect_report(std::move(subtasks));
      result = to_json(report);
      if (!csv_path.empty()) detail::write_text(ctx, csv_path, to_csv(report));
      if (!svg_path.empty()) detail::write_text(ctx, svg_path, to_svg(report));
    }

    if (embed_manifest) {
      result["manifest"] = manifest.canonical();
      detail::write_json(ctx, out_path, result);
    } else {
      detail::write_json(ctx, out_path, result);
      if (out_path != "-") detail::write_json(ctx, out_path + ".manifest.json", manifest.canonical());
    }
  } catch (const Error& e) {
    err << e.what() << "\n";
    return e.kind() == ErrorKind::Usage ? kUsage : kValidation;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kValidation;
  }

  manifest.wall_clock_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();
  if (!ctx.quiet) {
    err << "nmsap " << manifest.subcommand << ": done in " << std::fixed << std::setprecision(1)
        << manifest.wall_clock_ms << " ms\n";
  }
  return kOk;
}

}  // namespace nmsap::cli
