#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mono3d/check.hpp"
#include "mono3d/detector.hpp"
#include "mono3d/eval.hpp"
#include "mono3d/gradcheck.hpp"
#include "mono3d/kitti.hpp"
#include "mono3d/manifest.hpp"
#include "mono3d/parallel.hpp"
#include "mono3d/synth.hpp"
#include "viz.hpp"

namespace fs = std::filesystem;
using namespace mono3d;

namespace {

constexpr int kOk = 0;
constexpr int kFailure = 1;
constexpr int kDiverged = 2;

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

LossWeights parse_gamma(const std::string& text) {
  std::istringstream in(text);
  std::vector<double> vals;
  std::string tok;
  while (std::getline(in, tok, ',')) vals.push_back(std::stod(tok));
  if (vals.size() != 3)
    throw std::invalid_argument(cat("--gamma expects three comma-separated weights, got '", text, "'"));
  LossWeights w;
  w.center = vals[0];
  w.corners = vals[1];
  w.relation = vals[2];
  w.validate();
  return w;
}

// Model-shape flags shared by train-toy and render; a checkpoint only stores
// parameter values, so both commands must agree on these to reload it.
struct ModelFlags {
  int image_size = 64;
  bool no_iafa = false;
  bool occlude = false;
  int min_objects = 1;
  int max_objects = 4;

  void attach(CLI::App* cmd) {
    cmd->add_option("--image-size", image_size, "square image extent (multiple of 8)")
        ->capture_default_str();
    cmd->add_flag("--no-iafa", no_iafa, "disable the relation stage entirely");
    cmd->add_flag("--occlude", occlude, "force a center-covered object pair into every scene");
    cmd->add_option("--min-objects", min_objects, "objects per scene, lower bound")
        ->capture_default_str();
    cmd->add_option("--max-objects", max_objects, "objects per scene, upper bound")
        ->capture_default_str();
  }

  SceneConfig scene_config() const {
    SceneConfig cfg;
    cfg.targets.image_w = image_size;
    cfg.targets.image_h = image_size;
    cfg.min_objects = min_objects;
    cfg.max_objects = max_objects;
    cfg.force_occlusion = occlude;
    cfg.validate();
    return cfg;
  }

  DetectorConfig detector_config() const {
    DetectorConfig cfg;
    cfg.targets = scene_config().targets;
    cfg.use_attention = !no_iafa;
    cfg.attention.channels = cfg.stage_channels[3];
    cfg.attention.reduce = cfg.targets.reduce;
    cfg.validate();
    return cfg;
  }

  void snapshot(std::map<std::string, std::string>& config) const {
    config["image_size"] = std::to_string(image_size);
    config["no_iafa"] = no_iafa ? "1" : "0";
    config["occlude"] = occlude ? "1" : "0";
    config["min_objects"] = std::to_string(min_objects);
    config["max_objects"] = std::to_string(max_objects);
  }
};

std::array<double, 4> project_bbox(const Box3D& box, const CameraIntrinsics& k, int image_w,
                                   int image_h) {
  double le = 1e30, to = 1e30, ri = -1e30, bo = -1e30;
  for (const auto& c : box_corners(box)) {
    if (c.z <= 1e-6) continue;
    const double u = k.fx * c.x / c.z + k.px;
    const double v = k.fy * c.y / c.z + k.py;
    le = std::min(le, u);
    ri = std::max(ri, u);
    to = std::min(to, v);
    bo = std::max(bo, v);
  }
  if (ri < le) return {0, 0, 0, 0};
  return {std::clamp(le, 0.0, double(image_w)), std::clamp(to, 0.0, double(image_h)),
          std::clamp(ri, 0.0, double(image_w)), std::clamp(bo, 0.0, double(image_h))};
}

std::vector<KittiLabel> detections_to_labels(const std::vector<Detection>& dets,
                                             const CameraIntrinsics& k, int image_w, int image_h) {
  std::vector<KittiLabel> rows;
  rows.reserve(dets.size());
  for (const auto& d : dets) {
    KittiLabel row = KittiLabel::from_box(d.box, "Car");
    row.bbox = project_bbox(d.box, k, image_w, image_h);
    row.score = d.score;
    rows.push_back(row);
  }
  return rows;
}

// ---------------------------------------------------------------------------

struct GradcheckArgs {
  std::uint64_t seed = 7;
  int trials = 100;
  double tolerance = 1e-4;
  int probes = 6;
  std::string out;
};

int run_gradcheck(const GradcheckArgs& a) {
  GradCheckOptions opt;
  opt.seed = a.seed;
  opt.trials = a.trials;
  opt.tolerance = a.tolerance;
  opt.probes = a.probes;
  const auto report = run_gradient_checks(opt);
  std::cout << report.table();
  if (!report.passed()) {
    for (const auto& r : report.rows)
      if (!(r.max_rel_err <= report.tolerance)) {
        std::cout << "failing op: " << r.op << " (seed " << a.seed << ")\n";
        break;
      }
  }
  if (!a.out.empty()) {
    fs::create_directories(a.out);
    write_text_file(fs::path(a.out) / "report.txt", report.table());
    RunManifest m;
    m.command = "gradcheck";
    m.seed = a.seed;
    m.config = {{"trials", std::to_string(a.trials)},
                {"tolerance", fmt17(a.tolerance)},
                {"probes", std::to_string(a.probes)}};
    m.inputs_hash = hash_hex(fnv1a64(""));
    m.outputs = {"report.txt"};
    m.write(fs::path(a.out) / "manifest.json");
  }
  return report.passed() ? kOk : kFailure;
}

// ---------------------------------------------------------------------------

struct TrainArgs {
  ModelFlags model;
  std::string out;
  int scenes = 20;
  std::uint64_t seed = 1;
  int steps = 2000;
  std::string gamma = "1,1,1";
  bool gamma_given = false;
  double lr = 2.5e-4;
  double drop1 = 0.5, drop2 = 0.75;
  bool mask_background = false;
  int log_every = 1;
  std::string resume;
};

int run_train_toy(const TrainArgs& a) {
  if (a.steps < 0) throw std::invalid_argument(cat("negative step count ", a.steps));
  LossWeights weights =
      (!a.gamma_given && a.model.no_iafa) ? parse_gamma("1,1,0") : parse_gamma(a.gamma);
  if (a.model.no_iafa && weights.relation != 0)
    throw std::invalid_argument("--no-iafa requires a zero relation weight (--gamma g0,g1,0)");

  const SceneConfig scfg = a.model.scene_config();
  const DetectorConfig dcfg = a.model.detector_config();
  const auto scenes = generate_dataset(a.seed, a.scenes, scfg);

  ParamRegistry params;
  Rng init_rng{derive_seed(a.seed, 101)};
  init_detector_params(params, dcfg, init_rng);
  if (!a.resume.empty()) params.load(a.resume);

  TrainConfig tc;
  tc.steps = a.steps;
  tc.adam.lr = a.lr;
  tc.weights = weights;
  tc.seed = a.seed;
  tc.drop1 = a.drop1;
  tc.drop2 = a.drop2;
  tc.mask_background = a.mask_background;
  tc.log_every = a.log_every;

  const fs::path out(a.out);
  fs::create_directories(out);

  // steps 0 still writes every artifact; the checkpoint is the init state
  const TrainResult result =
      a.steps > 0 ? train_detector(params, dcfg, scenes, tc) : TrainResult{};

  std::ostringstream csv;
  csv << "step,loss_center,loss_reg,loss_mask,loss_total\n";
  for (const auto& row : result.curve)
    csv << row.step << "," << fmt17(row.center) << "," << fmt17(row.corners) << ","
        << fmt17(row.relation) << "," << fmt17(row.total) << "\n";
  write_text_file(out / "loss.csv", csv.str());

  params.save(out / "checkpoint.bin");

  std::vector<std::string> outputs = {"loss.csv", "checkpoint.bin"};
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    write_frame(out / "dataset", static_cast<int>(i), scenes[i], {"Car"});
    const std::string f = frame_name(static_cast<int>(i));
    outputs.push_back("dataset/label_2/" + f + ".txt");
    outputs.push_back("dataset/calib/" + f + ".txt");
  }
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    Tape tape;
    const auto heads = detector_forward(tape, scenes[i].image, params, dcfg);
    const auto dets = decode_detections(heads, scenes[i].k, dcfg);
    write_detections(out / "detections", static_cast<int>(i),
                     detections_to_labels(dets, scenes[i].k, scfg.targets.image_w,
                                          scfg.targets.image_h));
    outputs.push_back("detections/" + frame_name(static_cast<int>(i)) + ".txt");
  }

  const double iou = mean_matched_iou3d(params, dcfg, scenes);
  std::ostringstream metrics;
  metrics << "first_total " << fmt17(result.first_total) << "\n"
          << "last_total " << fmt17(result.last_total) << "\n"
          << "mean_iou3d " << fmt17(iou) << "\n"
          << "depth_clamps " << result.depth_clamps << "\n"
          << "steps_without_mask " << result.steps_without_mask << "\n";
  write_text_file(out / "metrics.txt", metrics.str());
  outputs.push_back("metrics.txt");

  RunManifest m;
  m.command = "train-toy";
  m.seed = a.seed;
  a.model.snapshot(m.config);
  m.config["scenes"] = std::to_string(a.scenes);
  m.config["steps"] = std::to_string(a.steps);
  m.config["gamma"] = cat(fmt17(weights.center), ",", fmt17(weights.corners), ",",
                          fmt17(weights.relation));
  m.config["lr"] = fmt17(a.lr);
  m.config["drop1"] = fmt17(a.drop1);
  m.config["drop2"] = fmt17(a.drop2);
  m.config["mask_background"] = a.mask_background ? "1" : "0";
  m.config["log_every"] = std::to_string(a.log_every);
  m.inputs_hash = hash_hex(a.resume.empty() ? fnv1a64("") : hash_file(a.resume));
  std::sort(outputs.begin(), outputs.end());
  m.outputs = outputs;
  m.write(out / "manifest.json");

  std::cout << "trained " << a.steps << " steps on " << a.scenes << " scenes: loss "
            << fmt17(result.first_total) << " -> " << fmt17(result.last_total)
            << ", mean IoU3D " << fmt17(iou) << "\n";
  return kOk;
}

// ---------------------------------------------------------------------------

struct EvalArgs {
  std::string gt, det, calib, out;
  std::string metric = "both";  // both|3d|bev
  int criterion = 11;
  double iou = 0.5;
  std::vector<std::string> classes = {"Car"};
};

int run_eval(const EvalArgs& a) {
  const auto inputs = load_eval_inputs(a.gt, a.det);
  const auto report = evaluate_all(inputs, a.classes, a.iou);

  EvalReport shown;
  const std::string want = cat("ap", a.criterion);
  for (const auto& row : report.rows) {
    const bool metric_ok = a.metric == "both" || row.metric.find("_" + a.metric) != std::string::npos;
    if (metric_ok && row.metric.rfind(want, 0) == 0) shown.rows.push_back(row);
  }
  std::cout << shown.table();

  fs::create_directories(a.out);
  write_text_file(fs::path(a.out) / "ap.csv", report.csv());

  RunManifest m;
  m.command = "eval";
  m.config = {{"metric", a.metric},
              {"criterion", std::to_string(a.criterion)},
              {"iou", fmt17(a.iou)}};
  std::string cls;
  for (const auto& c : a.classes) cls += (cls.empty() ? "" : ",") + c;
  m.config["classes"] = cls;
  std::uint64_t h = hash_dir(a.gt);
  const std::string det_hex = hash_hex(hash_dir(a.det));
  h = fnv1a64(det_hex.data(), det_hex.size(), h);
  if (!a.calib.empty()) {
    const std::string calib_hex = hash_hex(hash_dir(a.calib));
    h = fnv1a64(calib_hex.data(), calib_hex.size(), h);
  }
  m.inputs_hash = hash_hex(h);
  m.outputs = {"ap.csv"};
  m.write(fs::path(a.out) / "manifest.json");
  return kOk;
}

// ---------------------------------------------------------------------------

struct RenderArgs {
  ModelFlags model;
  std::string checkpoint;
  std::uint64_t scene_seed = 1;
  std::string out;
};

int run_render(const RenderArgs& a) {
  if (!fs::exists(a.checkpoint))
    throw std::invalid_argument(cat("checkpoint not found: ", a.checkpoint));

  const SceneConfig scfg = a.model.scene_config();
  const DetectorConfig dcfg = a.model.detector_config();
  ParamRegistry params;
  Rng init_rng{derive_seed(a.scene_seed, 101)};
  init_detector_params(params, dcfg, init_rng);
  params.load(a.checkpoint);

  const auto scene = generate_scene(a.scene_seed, scfg);
  Tape tape;
  const auto heads = detector_forward(tape, scene.image, params, dcfg);
  const auto dets = decode_detections(heads, scene.k, dcfg);

  const fs::path out(a.out);
  fs::create_directories(out);
  std::vector<std::string> outputs;

  write_ppm(out / "scene.ppm", scene.image);
  outputs.push_back("scene.ppm");

  {
    const int fh = dcfg.targets.feat_h(), fw = dcfg.targets.feat_w();
    std::vector<double> heat(static_cast<std::size_t>(fh) * fw);
    for (int y = 0; y < fh; ++y)
      for (int x = 0; x < fw; ++x) heat[static_cast<std::size_t>(y) * fw + x] = heads.heatmap->at(y, x, 0);
    write_pgm_gray(out / "heatmap.pgm", fw, fh, normalize_bytes(heat));
    outputs.push_back("heatmap.pgm");
  }

  if (heads.relation) {
    const auto& rel = *heads.relation;
    fs::create_directories(out / "attention");
    for (std::size_t i = 0; i < scene.targets.centers.size(); ++i) {
      const auto& c = scene.targets.centers[i];
      if (c.grid_cell < 0) continue;
      const auto row = relation_row(rel, c.grid_cell);
      char name[48];
      std::snprintf(name, sizeof(name), "attention/obj_%02zu.pgm", i);
      write_pgm_gray(out / name, rel.grid_w, rel.grid_h, normalize_bytes(row));
      outputs.emplace_back(name);
      if (!c.interior.empty()) {
        const double own = row_mass_in_mask(rel, c.grid_cell, c.interior);
        std::ostringstream line;
        line << "obj " << i << ": own-mask mass " << fmt17(own);
        const int occluder = scene.objects[i].occluded_by;
        if (occluder >= 0 && !scene.targets.centers[static_cast<std::size_t>(occluder)].interior.empty()) {
          const double other = row_mass_in_mask(
              rel, c.grid_cell, scene.targets.centers[static_cast<std::size_t>(occluder)].interior);
          line << ", occluder mass " << fmt17(other);
        }
        std::cout << line.str() << "\n";
      }
    }
  }

  std::vector<Box3D> gt;
  for (const auto& o : scene.objects) gt.push_back(o.box);
  std::vector<BevDetection> bev_dets;
  for (const auto& d : dets) bev_dets.push_back({d.box, d.score});
  write_text_file(out / "bev.svg", bev_svg(gt, bev_dets));
  outputs.push_back("bev.svg");

  RunManifest m;
  m.command = "render";
  m.seed = a.scene_seed;
  a.model.snapshot(m.config);
  m.inputs_hash = hash_hex(hash_file(a.checkpoint));
  std::sort(outputs.begin(), outputs.end());
  m.outputs = outputs;
  m.write(out / "manifest.json");

  std::cout << "rendered scene " << a.scene_seed << ": " << scene.objects.size() << " objects, "
            << dets.size() << " detections\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"instance-aware monocular 3D detection toybox"};
  app.require_subcommand(1);
  app.footer("MONO3D_THREADS caps the worker count for parallel sections.");

  GradcheckArgs gc;
  auto* gc_cmd = app.add_subcommand("gradcheck", "finite-difference check of every backward pass");
  gc_cmd->set_config("--config");
  gc_cmd->add_option("--seed", gc.seed, "base seed")->capture_default_str();
  gc_cmd->add_option("--trials", gc.trials, "random configurations per op")->capture_default_str();
  gc_cmd->add_option("--tolerance", gc.tolerance, "relative error bound")->capture_default_str();
  gc_cmd->add_option("--probes", gc.probes, "probed coordinates per leaf")->capture_default_str();
  gc_cmd->add_option("--out", gc.out, "directory for report.txt + manifest.json");

  TrainArgs tr;
  auto* tr_cmd = app.add_subcommand("train-toy", "train the toy detector on synthetic scenes");
  tr_cmd->set_config("--config");
  tr_cmd->add_option("--out", tr.out, "output directory")->required();
  tr_cmd->add_option("--scenes", tr.scenes, "dataset size")->capture_default_str();
  tr_cmd->add_option("--seed", tr.seed, "dataset + init seed")->capture_default_str();
  tr_cmd->add_option("--steps", tr.steps, "optimizer steps")->capture_default_str();
  tr_cmd->add_option("--gamma", tr.gamma, "loss weights g0,g1,g2 (center, corners, relation)")
      ->capture_default_str();
  tr_cmd->add_option("--lr", tr.lr, "Adam learning rate")->capture_default_str();
  tr_cmd->add_option("--drop1", tr.drop1, "first 10x lr drop, fraction of steps")
      ->capture_default_str();
  tr_cmd->add_option("--drop2", tr.drop2, "second 10x lr drop, fraction of steps")
      ->capture_default_str();
  tr_cmd->add_flag("--mask-background", tr.mask_background,
                   "penalize relation mass outside the instance mask too");
  tr_cmd->add_option("--log-every", tr.log_every, "loss CSV stride")->capture_default_str();
  tr_cmd->add_option("--resume", tr.resume, "checkpoint to continue from");
  tr.model.attach(tr_cmd);

  EvalArgs ev;
  auto* ev_cmd = app.add_subcommand("eval", "KITTI-style AP over a dataset root");
  ev_cmd->set_config("--config");
  ev_cmd->add_option("--gt", ev.gt, "dataset root (label_2/, calib/)")->required();
  ev_cmd->add_option("--det", ev.det, "detection directory ({frame}.txt with scores)")->required();
  ev_cmd->add_option("--calib", ev.calib, "calibration directory (defaults inside --gt)");
  ev_cmd->add_option("--out", ev.out, "output directory")->required();
  ev_cmd->add_option("--metric", ev.metric, "table rows: both|3d|bev")
      ->check(CLI::IsMember({"both", "3d", "bev"}))
      ->capture_default_str();
  ev_cmd->add_option("--criterion", ev.criterion, "interpolation grid: 11 or 40")
      ->check(CLI::IsMember({11, 40}))
      ->capture_default_str();
  ev_cmd->add_option("--iou", ev.iou, "match threshold")->capture_default_str();
  ev_cmd->add_option("--class", ev.classes, "classes to score")->capture_default_str();

  RenderArgs rd;
  auto* rd_cmd = app.add_subcommand("render", "attention rows + BEV plot for one scene");
  rd_cmd->set_config("--config");
  rd_cmd->add_option("--checkpoint", rd.checkpoint, "trained parameters")->required();
  rd_cmd->add_option("--scene", rd.scene_seed, "scene seed")->capture_default_str();
  rd_cmd->add_option("--out", rd.out, "output directory")->required();
  rd.model.attach(rd_cmd);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kFailure;
  }

  try {
    if (gc_cmd->parsed()) return run_gradcheck(gc);
    if (tr_cmd->parsed()) {
      tr.gamma_given = tr_cmd->count("--gamma") > 0;
      return run_train_toy(tr);
    }
    if (ev_cmd->parsed()) return run_eval(ev);
    if (rd_cmd->parsed()) return run_render(rd);
  } catch (const DivergenceError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kDiverged;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFailure;
  }
  return kFailure;
}
