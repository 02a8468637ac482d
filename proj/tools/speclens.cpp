// speclens command-line front end.
//
//   speclens <explain|scan|lens|evaluate|oracle|train> [--config FILE]
//            [--set key.path=value]... [--out DIR] [--workers N] [--seed N]
//            [--print-config]
//
// Seed precedence: --seed, then SPECLENS_SEED, then the config file.
// Exit codes: 0 ok, 1 verification failure or numeric abort, 2 usage or
// configuration error.

#include <CLI11.hpp>
#include <yaml-cpp/yaml.h>

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include "speclens/speclens.hpp"

namespace fs = std::filesystem;
using namespace speclens;

namespace {

constexpr const char* kDefaults = R"(seed: 0
workers: 1
output_dir: out
model:
  kind: analytic
  checkpoint: ""
  shape: [8, 8, 1]
  tones:
    - {amplitude: 1.0, frequency: 1.0, phase: 0.0}
  classes: 2
  hidden: [32]
input:
  kind: constant
  value: 0.3
  path: ""
  index: 0
dataset:
  count: 200
  size: 16
  seed: 0
method:
  name: SG2
  sigma: 0.5
  baseline: zero
  clamp: false
  mask: {rows: 4, cols: 4, prob: 0.5}
sigma:
  max: 1.0
  cutoff_file: ""
  grid: {kind: log, n: 16, lo: 0.01, hi: 1.0, values: []}
estimator:
  tolerance: 0.005
  check_interval: 32
  min_samples: 64
  max_samples: 8192
  batch_size: 32
  target: log_prob
  keep_channels: false
  class_index: -1
scan:
  mode: similarity
  granularity: image
  images: 8
  samples_per_image: 16
  noise: normal
  sg2: auto
lens:
  prior: uniform
  sigma0: 0.5
  weights: []
  rule: convex
evaluate:
  methods: [VG, VG2, SG, SG2, IG, IG2, XIG, XIG2]
  images: 20
  budgets: 100
  erosion: [1]
  fill: zero
  ranking: negate_for_gradient_methods
  ig_sigma: 1.0
train:
  epochs: 30
  batch_size: 16
  learning_rate: 0.05
  momentum: 0.9
  checkpoint: model.ckpt
oracle:
  samples: 100000
  filter: ""
  tolerance: -1
render:
  clip_percentile: 99
  colormap: inferno
  scale: 8
)";

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void merge_into(YAML::Node base, const YAML::Node& over, const std::string& path) {
  if (!over.IsMap()) throw ConfigError("config section '" + path + "' must be a mapping");
  for (const auto& kv : over) {
    const auto key = kv.first.as<std::string>();
    const std::string sub = path.empty() ? key : path + "." + key;
    if (!base[key]) throw ConfigError("unknown config key '" + sub + "'");
    if (base[key].IsMap() && kv.second.IsMap()) merge_into(base[key], kv.second, sub);
    else base[key] = YAML::Clone(kv.second);
  }
}

void apply_set(YAML::Node root, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("--set expects key.path=value");
  const std::string path = assignment.substr(0, eq);
  std::vector<std::string> parts;
  for (std::size_t a = 0, b; a <= path.size(); a = b + 1) {
    b = path.find('.', a);
    if (b == std::string::npos) b = path.size();
    parts.push_back(path.substr(a, b - a));
  }
  YAML::Node over = YAML::Load(assignment.substr(eq + 1));
  for (std::size_t i = parts.size(); i-- > 0;) {
    YAML::Node m(YAML::NodeType::Map);
    m[parts[i]] = over;
    over = m;
  }
  merge_into(root, over, "");
}

struct Run {
  YAML::Node cfg;
  std::string out;
  std::size_t workers = 1;
  std::uint64_t seed = 0;

  YAML::Node operator[](const std::string& k) const { return cfg[k]; }
};

template <typename T>
T get(const YAML::Node& n, const std::string& what) {
  try {
    return n.as<T>();
  } catch (const YAML::Exception&) {
    throw ConfigError("config value '" + what + "' has the wrong type");
  }
}

// ---------------------------------------------------------------------------

TextureSpec texture_spec(const Run& r) {
  TextureSpec t;
  t.count = get<std::size_t>(r["dataset"]["count"], "dataset.count");
  t.size = get<std::size_t>(r["dataset"]["size"], "dataset.size");
  t.seed = get<std::uint64_t>(r["dataset"]["seed"], "dataset.seed");
  return t;
}

TrainHyper train_hyper(const Run& r) {
  TrainHyper h;
  const auto t = r["train"];
  h.epochs = get<std::size_t>(t["epochs"], "train.epochs");
  h.batch_size = get<std::size_t>(t["batch_size"], "train.batch_size");
  h.learning_rate = get<double>(t["learning_rate"], "train.learning_rate");
  h.momentum = get<double>(t["momentum"], "train.momentum");
  h.seed = r.seed;
  return h;
}

std::unique_ptr<Model> build_model(const Run& r) {
  const auto m = r["model"];
  const auto kind = get<std::string>(m["kind"], "model.kind");
  if (kind == "checkpoint") {
    const auto path = get<std::string>(m["checkpoint"], "model.checkpoint");
    if (!fs::exists(path)) throw ConfigError("checkpoint '" + path + "' does not exist");
    return std::make_unique<TinyMlp>(load_checkpoint(path));
  }
  if (kind == "textures_mlp") {
    const auto data = frequency_textures(texture_spec(r));
    auto mlp = std::make_unique<TinyMlp>(data.images[0].shape,
                                         get<std::vector<std::size_t>>(m["hidden"], "model.hidden"), 2,
                                         r.seed);
    const auto rep = train_tiny(*mlp, data, train_hyper(r));
    if (rep.diverged) throw NumericError("training diverged");
    return mlp;
  }
  const auto dims = get<std::vector<std::size_t>>(m["shape"], "model.shape");
  if (dims.size() != 3) throw ConfigError("model.shape needs [height, width, channels]");
  const Shape shape{dims[0], dims[1], dims[2]};
  if (kind == "analytic") {
    std::vector<Tone> tones;
    for (const auto& t : m["tones"])
      tones.push_back({get<double>(t["amplitude"], "tone.amplitude"),
                       get<double>(t["frequency"], "tone.frequency"),
                       t["phase"] ? get<double>(t["phase"], "tone.phase") : 0.0});
    return std::make_unique<AnalyticField>(
        AnalyticField::uniform(shape, tones, get<std::size_t>(m["classes"], "model.classes")));
  }
  if (kind == "linear") {
    Grid w(shape);
    RandomStream rng(r.seed, 7);
    for (auto& v : w.values) v = rng.normal();
    return std::make_unique<LinearModel>(LinearModel::binary(w, 0.0));
  }
  throw ConfigError("unknown model.kind '" + kind + "'");
}

InputGrid load_grid_or_png(const std::string& path) {
  if (!fs::exists(path)) throw ConfigError("input '" + path + "' does not exist");
  return path.ends_with(".png") ? read_png(path) : read_float_grid(path);
}

InputGrid build_input(const Run& r, const Model& model) {
  const auto in = r["input"];
  const auto kind = get<std::string>(in["kind"], "input.kind");
  InputGrid x;
  if (kind == "constant") {
    x = InputGrid(model.input_shape(), get<double>(in["value"], "input.value"));
  } else if (kind == "png" || kind == "grid") {
    x = load_grid_or_png(get<std::string>(in["path"], "input.path"));
  } else if (kind == "texture") {
    std::size_t label = 0;
    x = texture_image(texture_spec(r), get<std::size_t>(in["index"], "input.index"), label);
  } else {
    throw ConfigError("unknown input.kind '" + kind + "'");
  }
  validate_input(x);
  check_shape(model, x);
  return x;
}

std::vector<InputGrid> dataset_images(const Run& r, std::size_t n) {
  auto spec = texture_spec(r);
  spec.count = n;
  return frequency_textures(spec).images;
}

double sigma_max(const Run& r) {
  const auto file = get<std::string>(r["sigma"]["cutoff_file"], "sigma.cutoff_file");
  if (!file.empty()) {
    std::ifstream is(file);
    if (!is) throw ConfigError("cutoff file '" + file + "' does not exist");
    const auto j = nlohmann::json::parse(is);
    return j.at("sigma_max").get<double>();
  }
  return get<double>(r["sigma"]["max"], "sigma.max");
}

SigmaGrid sigma_grid(const Run& r) {
  const auto g = r["sigma"]["grid"];
  SigmaGrid grid;
  grid.sigma_max = sigma_max(r);
  const auto values = get<std::vector<double>>(g["values"], "sigma.grid.values");
  if (!values.empty()) {
    grid.relative = values;
  } else {
    const auto kind = get<std::string>(g["kind"], "sigma.grid.kind");
    const auto n = get<std::size_t>(g["n"], "sigma.grid.n");
    const auto lo = get<double>(g["lo"], "sigma.grid.lo"), hi = get<double>(g["hi"], "sigma.grid.hi");
    if (n == 0) throw ConfigError("sigma grid is empty");
    if (kind == "log") grid.relative = logspace(lo, hi, n);
    else if (kind == "linear") grid.relative = linspace(lo, hi, n);
    else throw ConfigError("unknown sigma.grid.kind '" + kind + "'");
  }
  grid.validate();
  return grid;
}

EstimatorConfig estimator_config(const Run& r) {
  const auto e = r["estimator"];
  EstimatorConfig c;
  c.tolerance = get<double>(e["tolerance"], "estimator.tolerance");
  c.check_interval = get<std::size_t>(e["check_interval"], "estimator.check_interval");
  c.min_samples = get<std::size_t>(e["min_samples"], "estimator.min_samples");
  c.max_samples = get<std::size_t>(e["max_samples"], "estimator.max_samples");
  c.batch_size = get<std::size_t>(e["batch_size"], "estimator.batch_size");
  c.target = parse_target(get<std::string>(e["target"], "estimator.target"));
  c.keep_channels = get<bool>(e["keep_channels"], "estimator.keep_channels");
  const auto ci = get<long>(e["class_index"], "estimator.class_index");
  if (ci >= 0) c.class_index = std::size_t(ci);
  c.seed = r.seed;
  c.workers = r.workers;
  c.validate();
  return c;
}

HeatmapRender render_spec(const Run& r) {
  HeatmapRender h;
  h.clip_percentile = get<double>(r["render"]["clip_percentile"], "render.clip_percentile");
  h.colormap = get<std::string>(r["render"]["colormap"], "render.colormap");
  h.scale = get<std::size_t>(r["render"]["scale"], "render.scale");
  return h;
}

Grid baseline_for(const Run& r, const InputGrid& x) {
  const auto b = get<std::string>(r["method"]["baseline"], "method.baseline");
  if (b == "zero") return Grid(x.shape, 0.0);
  Grid g = load_grid_or_png(b);
  if (g.shape != x.shape) throw DimensionError("baseline shape does not match input");
  return g;
}

void prepare_out(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create output directory '" + dir + "'");
  const auto probe = fs::path(dir) / ".write_probe";
  {
    std::ofstream os(probe);
    if (!os) throw IoError("output directory '" + dir + "' is not writable");
  }
  fs::remove(probe, ec);
}

std::string path_in(const Run& r, const std::string& name) { return (fs::path(r.out) / name).string(); }

// ---------------------------------------------------------------------------

int cmd_explain(const Run& r) {
  const auto model = build_model(r);
  const auto x = build_input(r, *model);
  const auto cfg = estimator_config(r);
  const auto name = canonical_preset_name(get<std::string>(r["method"]["name"], "method.name"));
  const auto mask = r["method"]["mask"];
  double rel = get<double>(r["method"]["sigma"], "method.sigma");
  double sigma = rel * sigma_max(r);
  if ((name == "SG" || name == "SG2") && rel < 0.0) sigma = sg_sigma_heuristic(x).sigma;
  auto preset = make_preset(name, sigma, baseline_for(r, x), get<std::size_t>(mask["rows"], "mask.rows"),
                            get<std::size_t>(mask["cols"], "mask.cols"), get<double>(mask["prob"], "mask.prob"));
  if (get<bool>(r["method"]["clamp"], "method.clamp")) {
    auto* g = std::get_if<GaussianKernel>(&preset.kernel);
    if (!g) throw ConfigError("method.clamp only applies to Gaussian-kernel methods");
    g->clamp_unit = true;
  }
  const auto map = estimate(*model, x, preset, cfg);
  prepare_out(r.out);
  nlohmann::ordered_json extra;
  extra["sigma_relative"] = rel;
  write_attribution(path_in(r, "attribution"), map, extra);
  write_heatmap(path_in(r, "attribution.png"), map.values, render_spec(r));
  if (!map.meta.converged)
    std::cerr << "warning: estimate did not converge within " << cfg.max_samples
              << " samples (last change " << map.meta.final_change << ")\n";
  std::cout << "explain " << map.meta.method << " sigma=" << fmt(map.meta.sigma)
            << " class=" << map.meta.class_index << " samples=" << map.meta.samples
            << " converged=" << (map.meta.converged ? "yes" : "no") << "\n";
  return 0;
}

void write_curve_csv(const std::string& path, const SimilarityCurve& c) {
  CsvWriter csv({"sigma_relative", "sigma_absolute", "similarity", "zero_map"});
  for (std::size_t k = 0; k < c.score.size(); ++k) {
    const bool zero = std::find(c.zero_maps.begin(), c.zero_maps.end(), k) != c.zero_maps.end();
    csv.row({fmt(c.sigma_rel[k]), fmt(c.sigma_abs[k]), fmt(c.score[k]), zero ? "1" : "0"});
  }
  csv.save(path);
}

int cmd_scan(const Run& r) {
  const auto mode = get<std::string>(r["scan"]["mode"], "scan.mode");
  const auto grid = sigma_grid(r);
  const auto model = build_model(r);
  prepare_out(r.out);
  if (mode == "entropy") {
    const auto n = get<std::size_t>(r["scan"]["images"], "scan.images");
    if (n == 0) throw ConfigError("scan.images must be > 0");
    const auto images = dataset_images(r, n);
    const auto noise = get<std::string>(r["scan"]["noise"], "scan.noise") == "uniform" ? NoiseKind::uniform
                                                                                       : NoiseKind::normal;
    const auto scan = entropy_cutoff_scan(*model, images, grid.absolute_values(),
                                          get<std::size_t>(r["scan"]["samples_per_image"], "scan.samples_per_image"),
                                          r.seed, r.workers, CombinationRule::convex, noise);
    CsvWriter csv({"sigma_relative", "sigma_absolute", "entropy", "smoothed"});
    for (std::size_t k = 0; k < scan.sigma.size(); ++k)
      csv.row({fmt(grid.relative[k]), fmt(scan.sigma[k]), fmt(scan.entropy[k]), fmt(scan.smoothed[k])});
    csv.save(path_in(r, "entropy.csv"));
    nlohmann::ordered_json j;
    j["sigma_max"] = scan.sigma_max;
    j["cutoff_index"] = scan.cutoff_index;
    j["anomaly_detected"] = scan.anomaly_detected;
    if (!scan.anomaly_detected) j["note"] = "no anomaly detected";
    write_json(path_in(r, "entropy_cutoff.json"), j);
    std::cout << "entropy cutoff sigma_max=" << fmt(scan.sigma_max)
              << (scan.anomaly_detected ? "" : " (no anomaly detected)") << "\n";
    return 0;
  }
  if (mode != "similarity") throw ConfigError("unknown scan.mode '" + mode + "'");
  const auto cfg = estimator_config(r);
  const auto gran = parse_granularity(get<std::string>(r["scan"]["granularity"], "scan.granularity"));
  const auto noise = get<std::string>(r["scan"]["noise"], "scan.noise") == "uniform" ? NoiseKind::uniform
                                                                                     : NoiseKind::normal;
  SimilarityCurve curve;
  if (gran == Granularity::dataset) {
    const auto n = get<std::size_t>(r["scan"]["images"], "scan.images");
    if (n == 0) throw ConfigError("scan.images must be > 0");
    std::vector<LensStack> stacks;
    for (const auto& img : dataset_images(r, n)) {
      check_shape(*model, img);
      stacks.push_back(build_sg2_stack(*model, img, grid, cfg, CombinationRule::convex, noise));
    }
    curve = similarity_curve(stacks);
  } else {
    const auto x = build_input(r, *model);
    // Sampled SG^2 of a lone tone keeps a sigma-free floor, so analytic
    // fields default to the exact spectral stack.
    const auto src = get<std::string>(r["scan"]["sg2"], "scan.sg2");
    if (src != "auto" && src != "sampled" && src != "spectral")
      throw ConfigError("scan.sg2 must be auto, sampled or spectral");
    const auto* field = dynamic_cast<const AnalyticField*>(model.get());
    if (src == "spectral" && !field) throw ConfigError("scan.sg2=spectral needs an analytic model");
    const auto st = field && src != "sampled"
                        ? spectral_sg2_stack(*field, grid)
                        : build_sg2_stack(*model, x, grid, cfg, CombinationRule::convex, noise);
    curve = similarity_curve(st);
    if (gran == Granularity::pixel) write_float_grid(path_in(r, "sigma_star.safg"), similarity_pixelwise(st));
  }
  write_curve_csv(path_in(r, "similarity.csv"), curve);
  nlohmann::ordered_json j;
  j["sigma_star_relative"] = curve.sigma_star_rel;
  j["sigma_star_absolute"] = curve.sigma_star_abs;
  j["unimodal"] = is_unimodal(curve.score);
  j["zero_maps"] = curve.zero_maps;
  write_json(path_in(r, "similarity.json"), j);
  std::cout << "similarity argmax sigma=" << fmt(curve.sigma_star_rel) << " (relative)\n";
  return 0;
}

int cmd_lens(const Run& r) {
  const auto model = build_model(r);
  const auto x = build_input(r, *model);
  const auto grid = sigma_grid(r);
  const auto cfg = estimator_config(r);
  const auto l = r["lens"];
  const auto pk = get<std::string>(l["prior"], "lens.prior");
  Prior prior;
  if (pk == "uniform") prior = Prior::uniform();
  else if (pk == "dirac") prior = Prior::dirac(get<double>(l["sigma0"], "lens.sigma0"));
  else if (pk == "weights") prior = Prior::grid_weights(get<std::vector<double>>(l["weights"], "lens.weights"));
  else throw ConfigError("unknown lens.prior '" + pk + "'");
  const auto rule = parse_rule(get<std::string>(l["rule"], "lens.rule"));
  const auto st = build_sg2_stack(*model, x, grid, cfg, rule);
  const auto res = spectral_lens(st, prior);
  prepare_out(r.out);
  fs::create_directories(path_in(r, "stack"));
  for (std::size_t k = 0; k < st.size(); ++k) {
    char name[32];
    std::snprintf(name, sizeof name, "stack/sg2_%02zu", k);
    nlohmann::ordered_json extra;
    extra["sigma_relative"] = st.sigma_rel[k];
    write_attribution(path_in(r, name), st.maps[k], extra);
  }
  write_float_grid(path_in(r, "sl2.safg"), res.sl2);
  write_float_grid(path_in(r, "al.safg"), res.al);
  write_float_grid(path_in(r, "omega_al.safg"), res.omega_al);
  nlohmann::ordered_json j;
  j["prior"] = pk;
  j["rule"] = to_string(rule);
  j["sigma_relative"] = st.sigma_rel;
  j["sigma_absolute"] = st.sigma_abs;
  j["weights"] = res.weights;
  j["class_index"] = st.maps[0].meta.class_index;
  write_json(path_in(r, "lens.json"), j);
  const auto hr = render_spec(r);
  write_heatmap(path_in(r, "sl2.png"), res.sl2, hr);
  auto window = hr;
  window.norm = HeatmapRender::Norm::mean_std_window;
  write_heatmap(path_in(r, "omega_al.png"), res.omega_al, window);
  write_heatmap(path_in(r, "al.png"), res.al, window);
  std::cout << "lens prior=" << pk << " sigmas=" << st.size() << "\n";
  return 0;
}

int cmd_evaluate(const Run& r) {
  const auto e = r["evaluate"];
  const auto n = get<std::size_t>(e["images"], "evaluate.images");
  if (n == 0) throw ConfigError("evaluate.images must be > 0");
  const auto model = build_model(r);
  const auto images = dataset_images(r, n);
  for (const auto& x : images) check_shape(*model, x);
  StudyConfig sc;
  sc.methods = get<std::vector<std::string>>(e["methods"], "evaluate.methods");
  sc.budgets = default_budgets(get<std::size_t>(e["budgets"], "evaluate.budgets"));
  const auto fill = get<std::string>(e["fill"], "evaluate.fill");
  if (fill == "zero") sc.fill = Fill::zero();
  else if (fill == "channel_mean") sc.fill = Fill::channel_mean();
  else sc.fill = Fill::baseline(load_grid_or_png(fill));
  sc.convention = parse_rank_convention(get<std::string>(e["ranking"], "evaluate.ranking"));
  sc.estimator = estimator_config(r);
  sc.ig_sigma = get<double>(e["ig_sigma"], "evaluate.ig_sigma");
  sc.mask_rows = get<std::size_t>(r["method"]["mask"]["rows"], "mask.rows");
  sc.mask_cols = get<std::size_t>(r["method"]["mask"]["cols"], "mask.cols");
  sc.mask_prob = get<double>(r["method"]["mask"]["prob"], "mask.prob");
  sc.workers = r.workers;
  for (const auto& m : sc.methods) make_preset(m, 0.1, Grid(images[0].shape));  // validate names early

  prepare_out(r.out);
  CsvWriter table({"method", "dataset", "insertion_auc_mean", "insertion_auc_stderr", "deletion_auc_mean",
                   "deletion_auc_stderr", "n", "erosion_k"});
  CsvWriter tests({"gradient_method", "squared_method", "erosion_k", "metric", "t", "df", "p",
                   "mean_squared", "mean_gradient"});
  for (auto k : get<std::vector<std::size_t>>(e["erosion"], "evaluate.erosion")) {
    sc.erosion = ErosionSpec{k};
    const auto scores = run_study(*model, images, sc);
    for (const auto& s : scores) {
      const auto row = summarize(s, "textures", k);
      table.row({row.method, row.dataset, fmt(row.insertion_mean), fmt(row.insertion_se),
                 fmt(row.deletion_mean), fmt(row.deletion_se), std::to_string(row.n), std::to_string(k)});
    }
    if (n >= 2) {
      for (const auto& t : squared_vs_gradient_tests(scores)) {
        for (const auto& [metric, res] : {std::pair{"insertion", t.insertion}, std::pair{"deletion", t.deletion}})
          tests.row({t.gradient_method, t.squared_method, std::to_string(k), metric, fmt(res.t), fmt(res.df),
                     fmt(res.p), fmt(res.mean_a), fmt(res.mean_b)});
      }
    }
  }
  table.save(path_in(r, "results.csv"));
  tests.save(path_in(r, "ttests.csv"));
  std::cout << "evaluate images=" << n << " methods=" << sc.methods.size() << "\n";
  return 0;
}

int cmd_oracle(const Run& r) {
  BatteryOptions opt;
  opt.samples = get<std::size_t>(r["oracle"]["samples"], "oracle.samples");
  opt.filter = get<std::string>(r["oracle"]["filter"], "oracle.filter");
  const auto tol = get<double>(r["oracle"]["tolerance"], "oracle.tolerance");
  if (tol >= 0.0) opt.tolerance_override = tol;
  opt.seed = r.seed;
  opt.workers = r.workers;
  const auto reports = run_battery(opt);
  CsvWriter csv({"check", "lhs", "rhs", "abs_error", "rel_error", "tolerance", "metric", "pass", "note"});
  std::size_t failed = 0;
  for (const auto& rep : reports) {
    failed += !rep.pass;
    csv.row({rep.name, fmt(rep.lhs), fmt(rep.rhs), fmt(rep.abs_error), fmt(rep.rel_error), fmt(rep.tolerance),
             rep.relative ? "relative" : "absolute", rep.pass ? "1" : "0", rep.note});
  }
  prepare_out(r.out);
  csv.save(path_in(r, "oracle.csv"));
  std::cout << reports.size() - failed << "/" << reports.size() << " checks passed\n";
  for (const auto& rep : reports)
    if (!rep.pass) std::cout << "FAIL " << rep.name << " error=" << fmt(rep.relative ? rep.rel_error : rep.abs_error)
                             << " tol=" << fmt(rep.tolerance) << "\n";
  if (reports.empty()) throw ConfigError("oracle filter matched no checks");
  return failed ? 1 : 0;
}

int cmd_train(const Run& r) {
  const auto data = frequency_textures(texture_spec(r));
  TinyMlp mlp(data.images[0].shape, get<std::vector<std::size_t>>(r["model"]["hidden"], "model.hidden"), 2, r.seed);
  const auto rep = train_tiny(mlp, data, train_hyper(r));
  if (rep.diverged) throw NumericError("training diverged (loss is not finite)");
  prepare_out(r.out);
  save_checkpoint(mlp, path_in(r, get<std::string>(r["train"]["checkpoint"], "train.checkpoint")));
  nlohmann::ordered_json j;
  j["train_accuracy"] = rep.train_accuracy;
  j["final_loss"] = rep.final_loss;
  j["epochs"] = rep.epochs_run;
  j["images"] = data.size();
  write_json(path_in(r, "train.json"), j);
  std::cout << "train accuracy=" << fmt(rep.train_accuracy) << " loss=" << fmt(rep.final_loss) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"speclens: spectral analysis of gradient-based attributions"};
  app.require_subcommand(1);
  std::string config_path, out_dir;
  std::vector<std::string> sets;
  std::optional<std::size_t> workers;
  std::optional<std::uint64_t> seed;
  bool print_config = false;

  const std::vector<std::pair<std::string, std::string>> commands{
      {"explain", "compute one attribution map"},
      {"scan", "similarity or entropy scan over sigma"},
      {"lens", "SpectralLens / ArgLens maps"},
      {"evaluate", "MoRF insertion/deletion table"},
      {"oracle", "run the verification battery"},
      {"train", "train the texture MLP"}};
  for (const auto& [name, help] : commands) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("-c,--config", config_path, "YAML run config");
    sub->add_option("--set", sets, "override a config value, key.path=value");
    sub->add_option("-o,--out", out_dir, "output directory");
    sub->add_option("-w,--workers", workers, "worker threads (0 = all cores)");
    sub->add_option("--seed", seed, "random seed");
    sub->add_flag("--print-config", print_config, "print the effective config and exit");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  const std::string cmd = app.get_subcommands().front()->get_name();

  try {
    Run r;
    r.cfg = YAML::Load(kDefaults);
    if (!config_path.empty()) {
      if (!fs::exists(config_path)) throw ConfigError("config file '" + config_path + "' does not exist");
      const YAML::Node user = YAML::LoadFile(config_path);
      if (!user.IsNull()) merge_into(r.cfg, user, "");
    }
    for (const auto& s : sets) apply_set(r.cfg, s);
    if (const char* env = std::getenv("SPECLENS_SEED")) {
      try {
        r.cfg["seed"] = std::stoull(env);
      } catch (const std::exception&) {
        throw ConfigError("SPECLENS_SEED must be a non-negative integer");
      }
    }
    if (seed) r.cfg["seed"] = *seed;
    if (workers) r.cfg["workers"] = *workers;
    if (!out_dir.empty()) r.cfg["output_dir"] = out_dir;

    if (print_config) {
      YAML::Emitter em;
      em << r.cfg;
      std::cout << em.c_str() << "\n";
      return 0;
    }
    r.seed = get<std::uint64_t>(r.cfg["seed"], "seed");
    r.workers = resolve_workers(get<std::size_t>(r.cfg["workers"], "workers"));
    r.out = get<std::string>(r.cfg["output_dir"], "output_dir");

    if (cmd == "explain") return cmd_explain(r);
    if (cmd == "scan") return cmd_scan(r);
    if (cmd == "lens") return cmd_lens(r);
    if (cmd == "evaluate") return cmd_evaluate(r);
    if (cmd == "oracle") return cmd_oracle(r);
    if (cmd == "train") return cmd_train(r);
  } catch (const YAML::Exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const DimensionError& e) {
    std::cerr << "dimension error: " << e.what() << "\n";
    return 2;
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return 2;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
