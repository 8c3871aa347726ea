#include "rockgpt/cli.hpp"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "rockgpt/checkpoint.hpp"
#include "rockgpt/generation.hpp"
#include "rockgpt/gradcheck.hpp"
#include "rockgpt/lbm.hpp"
#include "rockgpt/morphology.hpp"
#include "rockgpt/synthdata.hpp"
#include "rockgpt/training.hpp"

namespace rockgpt {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

// flags shared by every subcommand
struct Common {
  uint64_t seed = 0;
  bool deterministic = false;
  std::string config_path;
  std::string out;
  int64_t threads = 0;  // 0 = resolve from config/env/default

  CLI::Option* seed_opt = nullptr;
  CLI::Option* threads_opt = nullptr;
};

void add_common(CLI::App* sub, Common& c, bool out_is_file = false) {
  c.seed_opt = sub->add_option("--seed", c.seed, "rng seed (u64)");
  sub->add_flag("--deterministic", c.deterministic,
                "pin deterministic execution (fixed-order reductions; always on here)");
  sub->add_option("--config", c.config_path, "json config file; flags override its values");
  sub->add_option("--out", c.out,
                  out_is_file ? "output file path" : "output directory for all artifacts")
      ->required();
  c.threads_opt = sub->add_option("--threads", c.threads, "worker threads");
}

json load_config(const std::string& path) {
  if (path.empty()) return json::object();
  std::ifstream f(path);
  if (!f.good()) throw IoError("cannot read config: " + path);
  try {
    return json::parse(f);
  } catch (const json::exception& e) {
    throw IoError("bad config json in " + path + ": " + e.what());
  }
}

// flag wins, then config value, then the preset default
template <typename T>
void merge(const json& cfg, const char* key, const CLI::Option* opt, T& value) {
  if (opt && opt->count() > 0) return;
  if (cfg.contains(key)) value = cfg.at(key).get<T>();
}

void resolve_threads(const json& cfg, Common& c) {
  merge(cfg, "threads", c.threads_opt, c.threads);
  if (c.threads == 0) {
    if (const char* env = std::getenv("ROCKGPT_THREADS")) {
      char* end = nullptr;
      long v = std::strtol(env, &end, 10);
      if (!end || *end != '\0' || v < 1)
        throw ConfigError("ROCKGPT_THREADS must be a positive integer");
      c.threads = v;
    }
  }
  if (c.threads < 0) throw ConfigError("--threads must be positive");
  if (c.threads > 0) set_threads(static_cast<int>(c.threads));
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::trunc);
  if (!f.good()) throw IoError("cannot write " + path);
  f << text;
}

// provenance echo: the full effective configuration, written before the job
void echo_config(const std::string& dir, const std::string& command, const Common& c,
                 json body) {
  body["command"] = command;
  body["seed"] = c.seed;
  body["deterministic"] = c.deterministic;
  body["threads"] = c.threads;
  body["out"] = c.out;
  write_text(dir + "/run_config.json", body.dump(2) + "\n");
}

VqVaeConfig patch_vq_config(const json& j) {
  VqVaeConfig c;
  if (j.contains("in_channels")) c.in_channels = j.at("in_channels").get<int64_t>();
  if (j.contains("width")) c.width = j.at("width").get<int64_t>();
  if (j.contains("res_hidden")) c.res_hidden = j.at("res_hidden").get<int64_t>();
  if (j.contains("res_blocks")) c.res_blocks = j.at("res_blocks").get<int64_t>();
  if (j.contains("downsample")) c.downsample = j.at("downsample").get<Triple>();
  if (j.contains("codebook_size")) c.codebook_size = j.at("codebook_size").get<int64_t>();
  if (j.contains("code_dim")) c.code_dim = j.at("code_dim").get<int64_t>();
  if (j.contains("beta")) c.beta = static_cast<real>(j.at("beta").get<double>());
  return c;
}

GptConfig patch_gpt_config(const json& j) {
  GptConfig c;
  if (j.contains("blocks")) c.blocks = j.at("blocks").get<int64_t>();
  if (j.contains("d_model")) c.d_model = j.at("d_model").get<int64_t>();
  if (j.contains("heads")) c.heads = j.at("heads").get<int64_t>();
  if (j.contains("mlp_mult")) c.mlp_mult = j.at("mlp_mult").get<int64_t>();
  if (j.contains("vocab")) c.vocab = j.at("vocab").get<int64_t>();
  if (j.contains("code_dim")) c.code_dim = j.at("code_dim").get<int64_t>();
  if (j.contains("max_seq")) c.max_seq = j.at("max_seq").get<int64_t>();
  if (j.contains("num_classes")) c.num_classes = j.at("num_classes").get<int64_t>();
  if (j.contains("cond_base")) c.cond_base = j.at("cond_base").get<int64_t>();
  if (j.contains("dropout")) c.dropout = static_cast<real>(j.at("dropout").get<double>());
  if (j.contains("conditional")) c.conditional = j.at("conditional").get<bool>();
  return c;
}

// ---- subcommand jobs ----

struct SynthArgs {
  Common common;
  int64_t per_class = 0;
  CLI::Option* per_class_opt = nullptr;
};

int run_synth(const SynthArgs& a) {
  json cfg = load_config(a.common.config_path);
  Common c = a.common;
  resolve_threads(cfg, c);
  merge(cfg, "seed", c.seed_opt, c.seed);

  if (!cfg.contains("classes"))
    throw ConfigError("synth needs a config file with a 'classes' array");
  std::vector<SynthClassSpec> classes;
  for (const auto& cj : cfg.at("classes")) {
    SynthClassSpec s;
    s.name = cj.at("name").get<std::string>();
    s.sigma = cj.at("sigma").get<std::array<double, 3>>();
    if (cj.contains("phi_lo")) s.phi_lo = cj.at("phi_lo").get<double>();
    if (cj.contains("phi_hi")) s.phi_hi = cj.at("phi_hi").get<double>();
    if (cj.contains("voxel_um")) s.voxel_um = cj.at("voxel_um").get<double>();
    classes.push_back(std::move(s));
  }
  int64_t per_class = a.per_class_opt->count() > 0 ? a.per_class
                                                   : cfg.value("per_class", int64_t{2});
  auto extent = cfg.value("extent", std::array<int64_t, 3>{16, 16, 16});
  int64_t l = cfg.value("l", int64_t{8});
  int64_t stride = cfg.value("stride", int64_t{4});

  fs::create_directories(c.out);
  json echo = cfg;
  echo["per_class"] = per_class;
  echo["extent"] = extent;
  echo["l"] = l;
  echo["stride"] = stride;
  echo_config(c.out, "synth", c, echo);

  auto manifest = make_dataset(classes, per_class, extent, l, stride, c.seed, c.out);
  std::cout << "wrote " << manifest.volumes.size() << " volumes and manifest.json to " << c.out
            << "\n";
  return 0;
}

struct ExtractArgs {
  Common common;
  std::string volume;
  int64_t l = 8, stride = 4;
  CLI::Option *volume_opt = nullptr, *l_opt = nullptr, *stride_opt = nullptr;
};

int run_extract(const ExtractArgs& a) {
  json cfg = load_config(a.common.config_path);
  Common c = a.common;
  resolve_threads(cfg, c);
  ExtractArgs e = a;
  merge(cfg, "volume", e.volume_opt, e.volume);
  merge(cfg, "l", e.l_opt, e.l);
  merge(cfg, "stride", e.stride_opt, e.stride);
  if (e.volume.empty()) throw ConfigError("extract needs --volume or a config 'volume' key");

  fs::create_directories(c.out);
  echo_config(c.out, "extract", c,
              json{{"volume", e.volume}, {"l", e.l}, {"stride", e.stride}});

  auto v = load_rvox(e.volume);
  auto wins = extract_sequences(v, e.l, e.stride);
  for (size_t i = 0; i < wins.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "seq_%03zu.rvox", i);
    save_rvox(c.out + "/" + name, wins[i]);
  }
  std::cout << "wrote " << wins.size() << " sequences to " << c.out << "\n";
  return 0;
}

struct TrainArgs {
  Common common;
  std::string manifest;
  std::string stage1;  // train-gpt only
  std::string resume;
  int64_t iters = 100, batch = 8, checkpoint_every = 0, log_every = 10;
  double lr = 3e-4, stop_loss = 0;
  CLI::Option *iters_opt = nullptr, *batch_opt = nullptr, *lr_opt = nullptr,
              *stop_opt = nullptr, *ck_opt = nullptr, *log_opt = nullptr;
};

TrainConfig make_train_config(const json& cfg, const TrainArgs& a, const Common& c) {
  TrainArgs t = a;
  merge(cfg, "iterations", t.iters_opt, t.iters);
  merge(cfg, "batch", t.batch_opt, t.batch);
  merge(cfg, "lr", t.lr_opt, t.lr);
  merge(cfg, "stop_loss", t.stop_opt, t.stop_loss);
  merge(cfg, "checkpoint_every", t.ck_opt, t.checkpoint_every);
  merge(cfg, "log_every", t.log_opt, t.log_every);
  TrainConfig out;
  out.iterations = t.iters;
  out.batch = t.batch;
  out.lr = static_cast<real>(t.lr);
  out.seed = c.seed;
  out.log_every = t.log_every;
  out.checkpoint_every = t.checkpoint_every;
  out.stop_loss = static_cast<real>(t.stop_loss);
  out.out_dir = c.out;
  out.resume_from = t.resume;
  return out;
}

json train_echo(const TrainConfig& t, const std::string& manifest) {
  return json{{"manifest", manifest},     {"iterations", t.iterations},
              {"batch", t.batch},         {"lr", t.lr},
              {"log_every", t.log_every}, {"checkpoint_every", t.checkpoint_every},
              {"stop_loss", t.stop_loss}, {"resume_from", t.resume_from}};
}

int run_train_vqvae(const TrainArgs& a) {
  json cfg = load_config(a.common.config_path);
  Common c = a.common;
  resolve_threads(cfg, c);
  merge(cfg, "seed", c.seed_opt, c.seed);
  VqVaeConfig model = patch_vq_config(cfg.value("model", json::object()));
  TrainConfig train = make_train_config(cfg, a, c);

  fs::create_directories(c.out);
  json echo = train_echo(train, a.manifest);
  echo["model"] = vqvae_config_json(model);
  echo_config(c.out, "train-vqvae", c, echo);

  auto manifest = load_manifest(a.manifest);
  auto r = train_stage1(manifest, model, train);
  std::cout << "stage 1 done: iterations=" << r.iterations_run
            << " final_loss=" << (r.curve.empty() ? 0.0 : r.curve.back())
            << " checkpoint=" << r.checkpoint_path << "\n";
  return 0;
}

int run_train_gpt(const TrainArgs& a) {
  json cfg = load_config(a.common.config_path);
  Common c = a.common;
  resolve_threads(cfg, c);
  merge(cfg, "seed", c.seed_opt, c.seed);
  GptConfig model = patch_gpt_config(cfg.value("model", json::object()));
  TrainConfig train = make_train_config(cfg, a, c);

  fs::create_directories(c.out);
  json echo = train_echo(train, a.manifest);
  echo["model"] = gpt_config_json(model);
  echo["stage1"] = a.stage1;
  echo_config(c.out, "train-gpt", c, echo);

  auto manifest = load_manifest(a.manifest);
  auto r = train_stage2(manifest, a.stage1, model, train);
  std::cout << "stage 2 done: iterations=" << r.iterations_run
            << " final_nll=" << (r.curve.empty() ? 0.0 : r.curve.back())
            << " checkpoint=" << r.checkpoint_path << "\n";
  return 0;
}

struct SampleArgs {
  Common common;
  std::string stage2;
  std::string slice_path;
  int64_t class_id = 0;
  double porosity = 0.3;
  int64_t iters = 1;
  int64_t l = 8;
  double temperature = 1.0;
  int64_t top_k = 0;
  bool greedy = false;
  CLI::Option *iters_opt = nullptr, *l_opt = nullptr, *temp_opt = nullptr,
              *topk_opt = nullptr, *poro_opt = nullptr, *class_opt = nullptr;
};

int run_sample(const SampleArgs& a) {
  json cfg = load_config(a.common.config_path);
  Common c = a.common;
  resolve_threads(cfg, c);
  merge(cfg, "seed", c.seed_opt, c.seed);
  SampleArgs s = a;
  merge(cfg, "iters", s.iters_opt, s.iters);
  merge(cfg, "l", s.l_opt, s.l);
  merge(cfg, "temperature", s.temp_opt, s.temperature);
  merge(cfg, "top_k", s.topk_opt, s.top_k);
  merge(cfg, "porosity", s.poro_opt, s.porosity);
  merge(cfg, "class", s.class_opt, s.class_id);

  fs::path out_file(c.out);
  fs::path dir = out_file.parent_path().empty() ? fs::path(".") : out_file.parent_path();
  fs::create_directories(dir);
  echo_config(dir.string(), "sample", c,
              json{{"stage2", s.stage2},
                   {"slice", s.slice_path},
                   {"class", s.class_id},
                   {"porosity", s.porosity},
                   {"iters", s.iters},
                   {"l", s.l},
                   {"temperature", s.temperature},
                   {"top_k", s.top_k},
                   {"greedy", s.greedy}});

  auto loaded = cgpt_from_checkpoint(load_checkpoint(s.stage2));
  auto seed_vol = load_rvox(s.slice_path);
  ConditionSpec cond;
  cond.h = seed_vol.h;
  cond.w = seed_vol.w;
  cond.label = s.class_id;
  cond.porosity = s.porosity;
  cond.slice.assign(seed_vol.values.begin(),
                    seed_vol.values.begin() + seed_vol.h * seed_vol.w);
  SampleSettings st;
  st.temperature = static_cast<real>(s.temperature);
  st.top_k = s.top_k;
  st.greedy = s.greedy;

  auto vol = stack_volume(loaded.vqvae, loaded.gpt, cond, s.l, s.iters, st, c.seed,
                          seed_vol.voxel_um);
  save_rvox(c.out, vol);
  std::cout << "wrote " << vol.d << "x" << vol.h << "x" << vol.w << " volume (porosity "
            << porosity(vol) << ") to " << c.out << "\n";
  return 0;
}

struct MetricsArgs {
  Common common;
  std::string volume;
  int64_t r_max = 0;
  CLI::Option* r_max_opt = nullptr;
};

int run_metrics(const MetricsArgs& a) {
  json cfg = load_config(a.common.config_path);
  Common c = a.common;
  resolve_threads(cfg, c);
  MetricsArgs m = a;
  merge(cfg, "r_max", m.r_max_opt, m.r_max);

  fs::create_directories(c.out);
  echo_config(c.out, "metrics", c, json{{"volume", m.volume}, {"r_max", m.r_max}});

  auto v = load_rvox(m.volume);
  auto report = morph_report(v, m.r_max);
  std::string id = fs::path(m.volume).stem().string();
  write_text(c.out + "/metrics.json", report_json(id, report) + "\n");
  write_text(c.out + "/metrics.csv", report_csv_header() + report_csv_row(id, report));
  std::cout << "porosity=" << report.phi << " lambda_mean=" << report.lambda_mean << "\n";
  return 0;
}

struct PermArgs {
  Common common;
  std::string volume;
  double tau = 1.0, g = 1e-5, tol = 1e-6;
  int64_t axis = 0, max_steps = 50000;
  bool allow_unconverged = false, dump_vel = false;
  CLI::Option *tau_opt = nullptr, *g_opt = nullptr, *tol_opt = nullptr, *axis_opt = nullptr,
              *steps_opt = nullptr;
};

int run_perm(const PermArgs& a) {
  json cfg = load_config(a.common.config_path);
  Common c = a.common;
  resolve_threads(cfg, c);
  PermArgs p = a;
  merge(cfg, "tau", p.tau_opt, p.tau);
  merge(cfg, "g", p.g_opt, p.g);
  merge(cfg, "tol", p.tol_opt, p.tol);
  merge(cfg, "axis", p.axis_opt, p.axis);
  merge(cfg, "max_steps", p.steps_opt, p.max_steps);

  fs::create_directories(c.out);
  echo_config(c.out, "perm", c,
              json{{"volume", p.volume},
                   {"tau", p.tau},
                   {"g", p.g},
                   {"tol", p.tol},
                   {"axis", p.axis},
                   {"max_steps", p.max_steps},
                   {"allow_unconverged", p.allow_unconverged},
                   {"velocity", p.dump_vel}});

  LbmConfig lc;
  lc.tau = p.tau;
  lc.g = p.g;
  lc.tol = p.tol;
  lc.axis = static_cast<int>(p.axis);
  lc.max_steps = p.max_steps;
  auto v = load_rvox(p.volume);
  LbmSolver solver(v, lc);
  solver.run();
  auto r = measure_permeability(solver, v.voxel_um, p.allow_unconverged);
  write_text(c.out + "/permeability.json", permeability_json(r, lc, v.voxel_um) + "\n");
  if (p.dump_vel) dump_velocity(solver, c.out + "/velocity.f32");
  std::cout << "k_darcy=" << r.k_darcy << " converged=" << (r.converged ? "yes" : "no")
            << " iterations=" << r.iterations << "\n";
  return 0;
}

struct GradcheckArgs {
  Common common;
  std::string precision = "both";
  int64_t probes = 20;
  CLI::Option* probes_opt = nullptr;
};

int run_gradcheck(const GradcheckArgs& a) {
  json cfg = load_config(a.common.config_path);
  Common c = a.common;
  resolve_threads(cfg, c);
  merge(cfg, "seed", c.seed_opt, c.seed);
  GradcheckArgs g = a;
  merge(cfg, "probes", g.probes_opt, g.probes);

  fs::create_directories(c.out);
  echo_config(c.out, "gradcheck", c, json{{"precision", g.precision}, {"probes", g.probes}});

  std::vector<std::string> precisions;
  if (g.precision == "both") {
    precisions = {"f32", "f64"};
  } else if (g.precision == "f32" || g.precision == "f64") {
    precisions = {g.precision};
  } else {
    throw ConfigError("--precision must be f32, f64, or both");
  }

  bool all_pass = true;
  json rows = json::array();
  for (const auto& prec : precisions) {
    auto suite = run_grad_suite(prec, static_cast<int>(g.probes), c.seed);
    for (const auto& row : suite) {
      all_pass = all_pass && row.pass;
      std::cout << (row.pass ? "PASS" : "FAIL") << " [" << prec << "] " << row.op
                << " max_rel_err=" << row.max_rel_err << " tol=" << row.tol << "\n";
      rows.push_back(json{{"precision", prec},
                          {"op", row.op},
                          {"max_rel_err", row.max_rel_err},
                          {"tol", row.tol},
                          {"pass", row.pass},
                          {"expected_mismatch", row.expected_mismatch}});
    }
  }
  write_text(c.out + "/gradcheck.json", rows.dump(2) + "\n");
  if (!all_pass) throw RuntimeFailure("gradient verification failed");
  std::cout << "all gradient checks passed\n";
  return 0;
}

}  // namespace

int cli_main(const std::vector<std::string>& args) {
  CLI::App app{"rockgpt: 3d porous-media reconstruction and verification toolkit"};
  app.require_subcommand(1);

  SynthArgs synth;
  auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic dataset with manifest");
  add_common(synth_cmd, synth.common);
  synth.per_class_opt =
      synth_cmd->add_option("--per-class", synth.per_class, "volumes per class");

  ExtractArgs extract;
  auto* extract_cmd =
      app.add_subcommand("extract", "cut a volume into stride-offset slice sequences");
  add_common(extract_cmd, extract.common);
  extract.volume_opt = extract_cmd->add_option("--volume", extract.volume, "input .rvox file");
  extract.l_opt = extract_cmd->add_option("--l", extract.l, "sequence length");
  extract.stride_opt = extract_cmd->add_option("--stride", extract.stride, "window stride");

  TrainArgs tv;
  auto* tv_cmd = app.add_subcommand("train-vqvae", "stage 1: train the discrete autoencoder");
  add_common(tv_cmd, tv.common);
  tv_cmd->add_option("--manifest", tv.manifest, "dataset manifest.json")->required();
  tv.iters_opt = tv_cmd->add_option("--iters", tv.iters, "total training iterations");
  tv.batch_opt = tv_cmd->add_option("--batch", tv.batch, "batch size");
  tv.lr_opt = tv_cmd->add_option("--lr", tv.lr, "adam learning rate");
  tv.stop_opt = tv_cmd->add_option("--stop-loss", tv.stop_loss, "early-stop loss threshold");
  tv.ck_opt = tv_cmd->add_option("--checkpoint-every", tv.checkpoint_every,
                                 "rolling checkpoint cadence (0 = final only)");
  tv.log_opt = tv_cmd->add_option("--log-every", tv.log_every, "console log cadence");
  tv_cmd->add_option("--resume", tv.resume, "checkpoint to continue from");

  TrainArgs tg;
  auto* tg_cmd =
      app.add_subcommand("train-gpt", "stage 2: train the conditional transformer");
  add_common(tg_cmd, tg.common);
  tg_cmd->add_option("--manifest", tg.manifest, "dataset manifest.json")->required();
  tg_cmd->add_option("--stage1", tg.stage1, "stage-1 checkpoint to freeze")->required();
  tg.iters_opt = tg_cmd->add_option("--iters", tg.iters, "total training iterations");
  tg.batch_opt = tg_cmd->add_option("--batch", tg.batch, "batch size");
  tg.lr_opt = tg_cmd->add_option("--lr", tg.lr, "adam learning rate");
  tg.stop_opt = tg_cmd->add_option("--stop-loss", tg.stop_loss, "early-stop nll threshold");
  tg.ck_opt = tg_cmd->add_option("--checkpoint-every", tg.checkpoint_every,
                                 "rolling checkpoint cadence (0 = final only)");
  tg.log_opt = tg_cmd->add_option("--log-every", tg.log_every, "console log cadence");
  tg_cmd->add_option("--resume", tg.resume, "checkpoint to continue from");

  SampleArgs sample;
  auto* sample_cmd =
      app.add_subcommand("sample", "generate a stacked volume from a conditional slice");
  add_common(sample_cmd, sample.common, true);
  sample_cmd->add_option("--stage2", sample.stage2, "stage-2 checkpoint")->required();
  sample_cmd->add_option("--slice", sample.slice_path, ".rvox whose first slice conditions")
      ->required();
  sample.class_opt = sample_cmd->add_option("--class", sample.class_id, "rock-type class id");
  sample.poro_opt =
      sample_cmd->add_option("--porosity", sample.porosity, "target porosity in [0,1]");
  sample.iters_opt =
      sample_cmd->add_option("--iters", sample.iters, "stacking iterations (chunks)");
  sample.l_opt = sample_cmd->add_option("--l", sample.l, "chunk length in slices");
  sample.temp_opt =
      sample_cmd->add_option("--temperature", sample.temperature, "sampling temperature");
  sample.topk_opt = sample_cmd->add_option("--top-k", sample.top_k, "top-k cutoff (0 = off)");
  sample_cmd->add_flag("--greedy", sample.greedy, "argmax decoding");

  MetricsArgs metrics;
  auto* metrics_cmd =
      app.add_subcommand("metrics", "morphology report (porosity, correlations, euler)");
  add_common(metrics_cmd, metrics.common);
  metrics_cmd->add_option("--volume", metrics.volume, "input .rvox file")->required();
  metrics.r_max_opt =
      metrics_cmd->add_option("--r-max", metrics.r_max, "correlation lag cap (0 = extent/2)");

  PermArgs perm;
  auto* perm_cmd = app.add_subcommand("perm", "lattice-boltzmann permeability");
  add_common(perm_cmd, perm.common);
  perm_cmd->add_option("--volume", perm.volume, "input .rvox file")->required();
  perm.tau_opt = perm_cmd->add_option("--tau", perm.tau, "bgk relaxation time (> 0.5)");
  perm.g_opt = perm_cmd->add_option("--g", perm.g, "body force (lattice units)");
  perm.tol_opt = perm_cmd->add_option("--tol", perm.tol, "convergence tolerance");
  perm.axis_opt = perm_cmd->add_option("--axis", perm.axis, "flow axis (0, 1, 2)");
  perm.steps_opt = perm_cmd->add_option("--max-steps", perm.max_steps, "step cap");
  perm_cmd->add_flag("--allow-unconverged", perm.allow_unconverged,
                     "measure even without convergence");
  perm_cmd->add_flag("--velocity", perm.dump_vel, "dump the velocity field (3 f32 per node)");

  GradcheckArgs grad;
  auto* grad_cmd = app.add_subcommand("gradcheck", "run the gradient verification suite");
  add_common(grad_cmd, grad.common);
  grad_cmd->add_option("--precision", grad.precision, "f32, f64, or both");
  grad.probes_opt = grad_cmd->add_option("--probes", grad.probes, "random probes per op");

  std::vector<const char*> argv;
  argv.reserve(args.size() + 1);
  argv.push_back("rockgpt");
  for (const auto& s : args) argv.push_back(s.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*synth_cmd) return run_synth(synth);
    if (*extract_cmd) return run_extract(extract);
    if (*tv_cmd) return run_train_vqvae(tv);
    if (*tg_cmd) return run_train_gpt(tg);
    if (*sample_cmd) return run_sample(sample);
    if (*metrics_cmd) return run_metrics(metrics);
    if (*perm_cmd) return run_perm(perm);
    if (*grad_cmd) return run_gradcheck(grad);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}

}  // namespace rockgpt
