// actloc command-line tool: synthetic datasets, training, detection,
// evaluation, and track-descriptor dumps.
//
// Exit codes: 0 success, 1 usage, 2 data error, 3 internal invariant
// violation. Every file-producing run writes a manifest (config + seed +
// version) sufficient to reproduce it byte-for-byte via --config.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "actloc/common.hpp"
#include "actloc/config.hpp"
#include "actloc/dataset.hpp"
#include "actloc/dataset_synth.hpp"
#include "actloc/eval.hpp"
#include "actloc/pipeline.hpp"
#include "actloc/scorer.hpp"
#include "actloc/stmh.hpp"
#include "actloc/training.hpp"
#include "actloc/video_context.hpp"

namespace fs = std::filesystem;
using namespace actloc;

namespace {

struct GlobalArgs {
  std::string config_path;
  std::uint64_t seed = 0;  // 0 = not set on the command line
  bool seed_set = false;
  int jobs = 1;
  std::string flow_cache;
};

Config effective_config(const GlobalArgs& g) {
  Config cfg;
  if (!g.config_path.empty()) cfg = load_config(g.config_path);
  if (g.seed_set) cfg.set("seed", std::to_string(g.seed));
  if (!cfg.has("seed")) cfg.set("seed", "1");
  if (g.jobs != 1) cfg.set("jobs", std::to_string(g.jobs));
  if (!g.flow_cache.empty()) cfg.set("flow_cache", g.flow_cache);
  return cfg;
}

std::uint64_t config_seed(const Config& cfg) {
  return std::uint64_t(parse_int(cfg.get("seed"), "config key seed"));
}

void write_manifest(const fs::path& path, const Config& cfg,
                    const std::string& command,
                    const std::vector<std::pair<std::string, std::string>>& extra) {
  Config m = cfg;
  m.set("actloc.version", kVersion);
  m.set("actloc.command", command);
  for (const auto& [k, v] : extra) m.set(k, v);
  write_file_atomic(path, encode_config(m));
}

// Builds the context for one video directory laid out as either a dataset
// video (frames/ + optional proposals/) or a bare frames directory.
VideoContext make_context(const fs::path& video_dir, const Config& cfg,
                          bool compute_features) {
  fs::path frames = fs::is_directory(video_dir / "frames") ? video_dir / "frames"
                                                           : video_dir;
  VideoContextParams vp;
  vp.scorer = scorer_from_config(cfg);
  vp.flow = flow_from_config(cfg);
  vp.grid = grid_from_config(cfg);
  vp.compute_features = compute_features;
  if (fs::is_directory(video_dir / "proposals"))
    vp.proposals_dir = video_dir / "proposals";
  std::string id = video_dir.filename().string();
  if (id.empty()) id = video_dir.parent_path().filename().string();
  std::string cache = cfg.get_or("flow_cache", "");
  if (!cache.empty()) vp.flow_cache_dir = fs::path(cache) / id;
  return VideoContext(load_sequence(frames, id), vp);
}

int cmd_synth(const GlobalArgs& g, const std::string& spec_path,
              const std::string& out_dir, int count) {
  Config cfg = effective_config(g);
  DatasetSynthSpec spec = load_dataset_synth_spec(spec_path);
  fs::create_directories(out_dir);
  synth_dataset(spec, out_dir, count, config_seed(cfg), grid_from_config(cfg));
  write_manifest(fs::path(out_dir) / "run_manifest.txt", cfg, "synth",
                 {{"synth.spec", spec_path},
                  {"synth.out", out_dir},
                  {"synth.count", std::to_string(count)}});
  std::cout << "synth: wrote " << count << " videos to " << out_dir << "\n";
  return 0;
}

int cmd_train(const GlobalArgs& g, const std::string& dataset_root,
              const std::string& model_dir) {
  Config cfg = effective_config(g);
  Dataset ds = load_dataset(dataset_root);

  TrainParams tp;
  tp.scorer = scorer_from_config(cfg);
  tp.flow = flow_from_config(cfg);
  tp.grid = grid_from_config(cfg);
  tp.stmh = stmh_from_config(cfg);
  tp.action_svm = svm_from_config(cfg, "svm");
  tp.stmh_svm = svm_from_config(cfg, "stmh_svm");
  tp.neg_iou = cfg.get_double("train.neg_iou", tp.neg_iou);
  tp.neg_per_frame = int(cfg.get_int("train.neg_per_frame", tp.neg_per_frame));
  tp.stmh_neg_per_video =
      int(cfg.get_int("train.stmh_neg_per_video", tp.stmh_neg_per_video));
  tp.seed = config_seed(cfg);
  tp.jobs = int(cfg.get_int("jobs", tp.jobs));
  std::string cache = cfg.get_or("flow_cache", "");
  if (!cache.empty()) tp.flow_cache_dir = cache;
  PipelineParams pp = pipeline_from_config(cfg);
  tp.window_lengths = pp.window_lengths;
  tp.prior_epsilon = pp.prior_epsilon;

  TrainedModels models = train_all(ds, tp);

  fs::create_directories(model_dir);
  save_bank(fs::path(model_dir) / "action", models.action);
  save_bank(fs::path(model_dir) / "stmh", models.stmh);
  write_prior(fs::path(model_dir) / "priors.txt", models.prior);
  std::string class_list;
  for (std::size_t i = 0; i < models.action.classes.size(); ++i)
    class_list += (i ? "," : "") + models.action.classes[i];
  write_manifest(fs::path(model_dir) / "run_manifest.txt", cfg, "train",
                 {{"train.dataset", dataset_root},
                  {"train.model_dir", model_dir},
                  {"classes", class_list}});
  std::cout << "train: " << models.action.classes.size()
            << " classes -> " << model_dir << "\n";
  return 0;
}

struct DetectArgs {
  std::string model_dir;
  std::string video;
  std::string dataset;
  std::string out;
  bool linking = false;
};

std::vector<Detection> detect_one(const fs::path& video_dir, const Config& cfg,
                                  const PipelineParams& pp,
                                  const ClassifierBank* action_bank,
                                  const ClassifierBank& stmh_bank,
                                  const DurationPrior& prior, bool linking) {
  ScorerConfig sc = scorer_from_config(cfg);
  const bool builtin = sc.kind == ScorerKind::BuiltinHistogram;
  VideoContext ctx = make_context(video_dir, cfg, builtin);
  std::unique_ptr<RegionScorer> scorer;
  if (builtin) {
    scorer = std::make_unique<BuiltinScorer>(*action_bank);
  } else {
    scorer = std::make_unique<PrecomputedScorer>(
        load_precomputed_scores(cfg.get("scorer.scores_file")));
  }
  if (linking) return detect_linked(ctx, *scorer, stmh_bank, prior, pp);
  return detect(ctx, *scorer, stmh_bank, prior, pp);
}

int cmd_detect(const Config& cfg, const DetectArgs& a) {
  PipelineParams pp = pipeline_from_config(cfg);
  pp.tracker.svm.seed = config_seed(cfg);

  ScorerConfig sc = scorer_from_config(cfg);
  ClassifierBank action_bank;
  if (sc.kind == ScorerKind::BuiltinHistogram)
    action_bank = load_bank(fs::path(a.model_dir) / "action");
  else if (!a.linking)
    throw DataError(
        "precomputed scores provide no region features; tracking needs the "
        "builtin extractor (use --linking for the linking baseline)");
  ClassifierBank stmh_bank = load_bank(fs::path(a.model_dir) / "stmh");
  DurationPrior prior = read_prior(fs::path(a.model_dir) / "priors.txt");

  std::vector<fs::path> videos;
  if (!a.video.empty()) {
    videos.emplace_back(a.video);
  } else {
    Dataset ds = load_dataset(a.dataset);
    for (const auto& id : ds.video_ids) videos.push_back(ds.video_dir(id));
  }

  const int jobs = int(cfg.get_int("jobs", 1));
  std::vector<std::vector<Detection>> per_video(videos.size());
  parallel_for(videos.size(), jobs, [&](std::size_t i) {
    per_video[i] = detect_one(videos[i], cfg, pp, &action_bank, stmh_bank,
                              prior, a.linking);
  });

  std::string body = "# actloc detections\n";
  std::size_t n = 0;
  for (const auto& dets : per_video) {
    body += encode_detections(dets);
    n += dets.size();
  }
  write_file_atomic(a.out, body);
  write_manifest(a.out + ".manifest", cfg, "detect",
                 {{"detect.model_dir", a.model_dir},
                  {"detect.video", a.video},
                  {"detect.dataset", a.dataset},
                  {"detect.out", a.out},
                  {"detect.linking", a.linking ? "true" : "false"}});
  std::cout << "detect: " << n << " detections -> " << a.out << "\n";
  return 0;
}

int cmd_eval(const GlobalArgs& g, const std::string& det_path,
             const std::string& gt_path, const std::string& deltas_arg,
             const std::string& out, const std::string& roc_out) {
  Config cfg = effective_config(g);
  std::vector<Detection> dets = read_detections(det_path);
  std::vector<GroundTruthInstance> gts = read_ground_truth(gt_path);

  std::vector<double> deltas;
  for (const std::string& tok : split_ws(Config::comma_to_space(deltas_arg)))
    deltas.push_back(parse_double(tok, "--deltas"));
  if (deltas.empty()) throw UsageError("--deltas needs at least one value");

  std::vector<std::string> classes;
  for (const auto& gt : gts) classes.push_back(gt.cls);
  for (const auto& d : dets) classes.push_back(d.cls);
  std::sort(classes.begin(), classes.end());
  classes.erase(std::unique(classes.begin(), classes.end()), classes.end());

  std::vector<EvalResult> results;
  for (double d : deltas) results.push_back(mean_ap(dets, gts, d));

  std::string report = "# actloc eval report\n";
  std::size_t wide = 5;
  for (const auto& c : classes) wide = std::max(wide, c.size());
  auto pad = [&](std::string s, std::size_t w) {
    while (s.size() < w) s.push_back(' ');
    return s;
  };
  report += pad("class", wide + 2);
  for (double d : deltas) report += pad("d=" + fmt_double(d), 12);
  report += "\n";
  for (const auto& c : classes) {
    report += pad(c, wide + 2);
    for (const auto& r : results) {
      std::string cell = "undefined";
      for (const auto& [name, ap] : r.per_class_ap)
        if (name == c) cell = fmt_double(ap);
      report += pad(cell, 12);
    }
    report += "\n";
  }
  report += pad("mAP", wide + 2);
  for (const auto& r : results) report += pad(fmt_double(r.map), 12);
  report += "\n";

  std::cout << report;
  if (!out.empty()) {
    write_file_atomic(out, report);
    write_manifest(out + ".manifest", cfg, "eval",
                   {{"eval.detections", det_path},
                    {"eval.ground_truth", gt_path},
                    {"eval.deltas", deltas_arg},
                    {"eval.out", out}});
  }
  if (!roc_out.empty()) {
    std::string dump = "# actloc roc: fpr tpr rows per delta\n";
    for (double d : deltas) {
      RocResult roc = roc_auc(dets, gts, d);
      dump += "delta " + fmt_double(d) + " auc " + fmt_double(roc.auc) + "\n";
      for (const auto& [fpr, tpr] : roc.points)
        dump += fmt_double(fpr) + " " + fmt_double(tpr) + "\n";
    }
    write_file_atomic(roc_out, dump);
  }
  return 0;
}

int cmd_extract_stmh(const GlobalArgs& g, const std::string& video_dir,
                     const std::string& tubes_path, const std::string& out) {
  Config cfg = effective_config(g);
  StmhParams sp = stmh_from_config(cfg);
  VideoContext ctx = make_context(video_dir, cfg, /*compute_features=*/false);
  std::vector<GroundTruthInstance> tubes = read_ground_truth(tubes_path);

  std::string body;
  int track_id = 0;
  for (const auto& tube : tubes) {
    if (tube.video_id != ctx.id())
      throw DataError(tubes_path + ": tube for video '" + tube.video_id +
                      "' but --video is '" + ctx.id() + "'");
    Track tr;
    tr.cls = tube.cls;
    tr.first_frame = tube.t_begin;
    tr.boxes = tube.boxes;
    for (const Chunk& ch : extract_chunks(tr, sp.L, sp.stride)) {
      FeatureVec d = stmh_descriptor(tr, ch, ctx.luma(), ctx.flows(), sp);
      body += ctx.id() + " " + tube.cls + " " + std::to_string(track_id) +
              " " + std::to_string(ch.start) + " " + std::to_string(d.size());
      for (float v : d) body += " " + fmt_double(double(v));
      body += "\n";
    }
    ++track_id;
  }
  write_file_atomic(out, body);
  write_manifest(out + ".manifest", cfg, "extract-stmh",
                 {{"stmh.video", video_dir},
                  {"stmh.tubes", tubes_path},
                  {"stmh.out", out}});
  std::cout << "extract-stmh: " << track_id << " tracks -> " << out << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"actloc: spatio-temporal action localization toolkit"};
  app.require_subcommand(1);

  GlobalArgs g;
  app.add_option("--config", g.config_path, "key=value config file");
  auto* seed_opt = app.add_option("--seed", g.seed, "seed override");
  app.add_option("--jobs", g.jobs, "worker threads across videos");
  app.add_option("--flow-cache", g.flow_cache, "optical-flow cache directory");

  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  std::string synth_spec, synth_out;
  int synth_count = 4;
  synth->add_option("--spec", synth_spec, "scene spec file")->required();
  synth->add_option("--out", synth_out, "output dataset directory")->required();
  synth->add_option("--count", synth_count, "number of videos");

  auto* train = app.add_subcommand("train", "train classifier banks + priors");
  std::string train_dataset, train_model_dir;
  train->add_option("--dataset", train_dataset, "dataset root")->required();
  train->add_option("--out-model-dir", train_model_dir, "model output directory")
      ->required();

  auto* detect = app.add_subcommand("detect", "detect actions in videos");
  DetectArgs da;
  detect->add_option("--model-dir", da.model_dir, "trained model directory")
      ->required();
  detect->add_option("--video", da.video, "one video directory");
  detect->add_option("--dataset", da.dataset, "dataset root (all videos)");
  detect->add_option("--out", da.out, "detection output file")->required();
  detect->add_flag("--linking", da.linking, "per-frame linking baseline");
  int topk = -1, ntracks = -1;
  double theta = -1.0;
  detect->add_option("--topk", topk, "classes ranked per video");
  detect->add_option("--ntracks", ntracks, "tracks per selected class");
  detect->add_option("--theta", theta, "seed overlap ceiling for new tracks");

  auto* eval = app.add_subcommand("eval", "score detections against ground truth");
  std::string eval_det, eval_gt, eval_deltas = "0.2,0.5", eval_out, eval_roc;
  eval->add_option("--detections", eval_det, "detection file")->required();
  eval->add_option("--ground-truth", eval_gt, "ground-truth file")->required();
  eval->add_option("--deltas", eval_deltas, "comma-separated overlap thresholds");
  eval->add_option("--out", eval_out, "write the report here too");
  eval->add_option("--roc-out", eval_roc, "ROC curve dump file");

  auto* xstmh = app.add_subcommand("extract-stmh", "dump track descriptors");
  std::string x_video, x_tubes, x_out;
  xstmh->add_option("--video", x_video, "video directory")->required();
  xstmh->add_option("--tubes", x_tubes, "tube file (ground-truth format)")
      ->required();
  xstmh->add_option("--out", x_out, "descriptor output file")->required();

  try {
    app.parse(argc, argv);
    g.seed_set = seed_opt->count() > 0;

    if (*synth) return cmd_synth(g, synth_spec, synth_out, synth_count);
    if (*train) return cmd_train(g, train_dataset, train_model_dir);
    if (*detect) {
      if (da.video.empty() == da.dataset.empty())
        throw UsageError("detect needs exactly one of --video or --dataset");
      // Command-line pipeline knobs override the config.
      Config cfg = effective_config(g);
      if (topk >= 0) cfg.set("pipeline.topk", std::to_string(topk));
      if (ntracks >= 0) cfg.set("pipeline.ntracks", std::to_string(ntracks));
      if (theta >= 0.0) cfg.set("pipeline.theta", fmt_double(theta));
      return cmd_detect(cfg, da);
    }
    if (*eval)
      return cmd_eval(g, eval_det, eval_gt, eval_deltas, eval_out, eval_roc);
    if (*xstmh) return cmd_extract_stmh(g, x_video, x_tubes, x_out);
    throw UsageError("no command given");
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const std::logic_error& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  }
}
