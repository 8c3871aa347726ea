#include "rockgpt/training.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

#include "rockgpt/adam.hpp"
#include "rockgpt/generation.hpp"

namespace rockgpt {

namespace {

// seed streams: model init and per-iteration draws never collide
constexpr uint64_t kInitStream = 0x696e6974;          // model construction
constexpr uint64_t kIterStream = 0x1000000000ull;     // + absolute iteration

void append_adam(const NamedTensors& params, Adam<real>& opt, NamedTensors& out) {
  for (size_t i = 0; i < params.items.size(); ++i) {
    const auto& [name, t] = params.items[i];
    out.add("adam." + name + ".m", RTensor::from(t.shape(), opt.moment1(i)));
    out.add("adam." + name + ".v", RTensor::from(t.shape(), opt.moment2(i)));
  }
}

void restore_adam(const NamedTensors& loaded, const NamedTensors& params, Adam<real>& opt) {
  for (size_t i = 0; i < params.items.size(); ++i) {
    const auto& name = params.items[i].first;
    for (auto [tag, dst] : {std::pair<const char*, std::vector<real>*>{".m", &opt.moment1(i)},
                            {".v", &opt.moment2(i)}}) {
      const RTensor* src = loaded.find("adam." + name + tag);
      if (!src) throw IoError("checkpoint is missing optimizer state for '" + name + "'");
      if (src->numel() != params.items[i].second.numel())
        throw IoError("optimizer state for '" + name + "' has the wrong size");
      *dst = src->values();
    }
  }
}

std::ofstream open_csv(const std::string& path, const std::string& header, bool resume) {
  std::ofstream csv(path, resume ? std::ios::app : std::ios::trunc);
  if (!csv.good()) throw IoError("cannot write loss log: " + path);
  if (!resume) csv << header << '\n';
  return csv;
}

}  // namespace

void TrainConfig::validate() const {
  if (iterations < 1) throw ConfigError("train: iterations must be at least 1");
  if (batch < 1) throw ConfigError("train: batch must be at least 1");
  if (!(lr > 0)) throw ConfigError("train: lr must be positive");
  if (log_every < 1) throw ConfigError("train: log_every must be at least 1");
  if (checkpoint_every < 0) throw ConfigError("train: checkpoint_every must be >= 0");
  if (stop_loss < 0) throw ConfigError("train: stop_loss must be >= 0");
  if (out_dir.empty()) throw ConfigError("train: out_dir must be set");
}

SequenceSet load_sequences(const DatasetManifest& manifest) {
  manifest.validate(true);
  SequenceSet out;
  out.l = manifest.l;
  for (const auto& e : manifest.volumes) {
    VoxelVolume v = load_rvox(manifest.resolve(e));
    if (out.h == 0) {
      out.h = v.h;
      out.w = v.w;
    } else if (v.h != out.h || v.w != out.w) {
      throw ConfigError("dataset volumes disagree on slice extents: " + e.path);
    }
    for (auto& win : extract_sequences(v, manifest.l, manifest.stride)) {
      std::vector<real> seq(win.values.begin(), win.values.end());
      out.seqs.push_back(std::move(seq));
      out.labels.push_back(e.label);
    }
  }
  return out;
}

std::vector<Stage2Example> build_stage2_examples(VqVae& vq, const SequenceSet& data) {
  std::vector<Stage2Example> out;
  out.reserve(data.seqs.size());
  int64_t slice_n = data.h * data.w;
  RContext ctx{nullptr, false, nullptr};
  for (size_t i = 0; i < data.seqs.size(); ++i) {
    const auto& seq = data.seqs[i];
    RTensor x = RTensor::from({1, 1, data.l, data.h, data.w}, seq);
    Stage2Example ex;
    ex.tokens = vq.quantize(vq.encode(ctx, x));
    ex.cond_slice.assign(seq.begin(), seq.begin() + slice_n);
    double acc = 0;
    for (real v : seq) acc += v;
    ex.porosity = acc / static_cast<double>(seq.size());
    ex.label = data.labels[i];
    out.push_back(std::move(ex));
  }
  return out;
}

TrainResult train_stage1(const DatasetManifest& manifest, const VqVaeConfig& mcfg,
                         const TrainConfig& tcfg) {
  tcfg.validate();
  mcfg.validate();
  SequenceSet data = load_sequences(manifest);
  if (data.seqs.empty()) throw ConfigError("train: the dataset has no sequences");
  int64_t n_seq = static_cast<int64_t>(data.seqs.size());

  std::filesystem::create_directories(tcfg.out_dir);
  std::string ck_path = tcfg.out_dir + "/vqvae.rgpt";

  Rng init_rng(derive_seed(tcfg.seed, kInitStream));
  VqVae model = VqVae::make(mcfg, init_rng);
  NamedTensors params, buffers;
  model.collect("vqvae", params, buffers);
  for (auto& [name, t] : params.items) t.set_requires_grad(true);
  AdamConfig<real> ac;
  ac.lr = tcfg.lr;
  Adam<real> opt(params.tensors(), ac);

  int64_t start_iter = 0;
  bool resuming = !tcfg.resume_from.empty();
  if (resuming) {
    CheckpointData ck = load_checkpoint(tcfg.resume_from);
    if (ck.kind != "vqvae") throw ConfigError("resume: not a stage-1 checkpoint");
    if (ck.config != vqvae_config_json(mcfg))
      throw ConfigError("resume: checkpoint was trained with a different config");
    load_named(ck.tensors, params);
    load_named(ck.tensors, buffers);
    restore_adam(ck.tensors, params, opt);
    opt.set_steps(ck.extra.at("adam_step").get<int64_t>());
    start_iter = ck.extra.at("iteration").get<int64_t>();
  }

  auto save = [&](int64_t iter) {
    CheckpointData ck;
    ck.kind = "vqvae";
    ck.config = vqvae_config_json(mcfg);
    ck.extra = {{"iteration", iter}, {"adam_step", opt.steps()}, {"seed", tcfg.seed}};
    for (const auto& [name, t] : params.items) ck.tensors.add(name, t);
    for (const auto& [name, t] : buffers.items) ck.tensors.add(name, t);
    append_adam(params, opt, ck.tensors);
    return save_checkpoint(ck_path, ck);
  };

  auto csv = open_csv(tcfg.out_dir + "/stage1_loss.csv", "iter,total,recon,codebook,commit",
                      resuming);
  TrainResult result;
  int64_t done = start_iter;
  for (int64_t iter = start_iter; iter < tcfg.iterations; ++iter) {
    Rng it_rng(derive_seed(tcfg.seed, kIterStream + static_cast<uint64_t>(iter)));
    RTensor x = RTensor::zeros({tcfg.batch, 1, data.l, data.h, data.w});
    int64_t stride = data.l * data.h * data.w;
    for (int64_t b = 0; b < tcfg.batch; ++b) {
      const auto& seq = data.seqs[it_rng.uniform_int(static_cast<uint64_t>(n_seq))];
      std::copy(seq.begin(), seq.end(), x.data() + b * stride);
    }

    Tape<real> tape;
    RContext ctx{&tape, true, &it_rng};
    auto f = model.train_forward(ctx, x);
    double total = f.losses.total.item();
    if (!std::isfinite(total)) {
      save(iter);
      throw RuntimeFailure("stage 1 loss diverged at iteration " + std::to_string(iter) +
                           "; last good state saved to " + ck_path);
    }
    csv << iter << ',' << total << ',' << f.losses.recon << ',' << f.losses.codebook << ','
        << f.losses.commit << '\n';
    result.curve.push_back(total);
    tape.backward(f.losses.total);
    try {
      opt.step();
    } catch (const RuntimeFailure&) {
      save(iter);
      throw;
    }
    done = iter + 1;
    if (tcfg.stop_loss > 0 && total < tcfg.stop_loss) break;
    if (tcfg.checkpoint_every > 0 && done % tcfg.checkpoint_every == 0) save(done);
  }
  csv.flush();
  result.checksum = save(done);
  result.checkpoint_path = ck_path;
  result.iterations_run = done;
  return result;
}

TrainResult train_stage2(const DatasetManifest& manifest, const std::string& stage1_path,
                         const GptConfig& gcfg, const TrainConfig& tcfg) {
  tcfg.validate();
  gcfg.validate();

  CheckpointData s1 = load_checkpoint(stage1_path);
  if (s1.kind != "vqvae") throw ConfigError("stage 2 needs a stage-1 checkpoint");
  uint64_t s1_checksum = checkpoint_checksum(stage1_path);
  VqVae vq = vqvae_from_checkpoint(s1);
  if (gcfg.vocab != vq.cfg.codebook_size || gcfg.code_dim != vq.cfg.code_dim)
    throw ConfigError("vocabulary mismatch between stages: stage 1 has K=" +
                      std::to_string(vq.cfg.codebook_size) + ", D=" +
                      std::to_string(vq.cfg.code_dim) + ", the transformer expects K=" +
                      std::to_string(gcfg.vocab) + ", D=" + std::to_string(gcfg.code_dim));
  if (static_cast<int64_t>(manifest.classes.size()) != gcfg.num_classes)
    throw ConfigError("the manifest declares " + std::to_string(manifest.classes.size()) +
                      " classes but the model expects " + std::to_string(gcfg.num_classes));

  SequenceSet data = load_sequences(manifest);
  if (data.seqs.empty()) throw ConfigError("train: the dataset has no sequences");
  auto examples = build_stage2_examples(vq, data);
  int64_t n_ex = static_cast<int64_t>(examples.size());
  int64_t seq_len = static_cast<int64_t>(examples[0].tokens.size());
  if (seq_len > gcfg.max_seq)
    throw ConfigError("latent sequences have " + std::to_string(seq_len) +
                      " tokens, above max_seq " + std::to_string(gcfg.max_seq));

  std::filesystem::create_directories(tcfg.out_dir);
  std::string ck_path = tcfg.out_dir + "/cgpt.rgpt";

  Rng init_rng(derive_seed(tcfg.seed, kInitStream));
  CondGpt gpt = CondGpt::make(gcfg, init_rng);
  gpt.set_codebook(vq.codebook);
  NamedTensors params, buffers;
  gpt.collect("gpt.", params, buffers);
  for (auto& [name, t] : params.items) t.set_requires_grad(true);
  AdamConfig<real> ac;
  ac.lr = tcfg.lr;
  Adam<real> opt(params.tensors(), ac);

  NamedTensors vq_params, vq_buffers;
  vq.collect("vqvae", vq_params, vq_buffers);

  int64_t start_iter = 0;
  bool resuming = !tcfg.resume_from.empty();
  if (resuming) {
    CheckpointData ck = load_checkpoint(tcfg.resume_from);
    if (ck.kind != "cgpt") throw ConfigError("resume: not a stage-2 checkpoint");
    if (ck.config != gpt_config_json(gcfg))
      throw ConfigError("resume: checkpoint was trained with a different config");
    if (ck.stage1_checksum() != s1_checksum)
      throw ConfigError("resume: checkpoint was trained against a different stage 1");
    load_named(ck.tensors, params);
    load_named(ck.tensors, buffers);
    restore_adam(ck.tensors, params, opt);
    opt.set_steps(ck.extra.at("adam_step").get<int64_t>());
    start_iter = ck.extra.at("iteration").get<int64_t>();
  }

  auto save = [&](int64_t iter) {
    CheckpointData ck;
    ck.kind = "cgpt";
    ck.config = gpt_config_json(gcfg);
    ck.extra = {{"iteration", iter},
                {"adam_step", opt.steps()},
                {"seed", tcfg.seed},
                {"stage1_checksum", s1_checksum},
                {"vqvae_config", vqvae_config_json(vq.cfg)}};
    for (const auto& [name, t] : params.items) ck.tensors.add(name, t);
    for (const auto& [name, t] : buffers.items) ck.tensors.add(name, t);
    // the frozen stage-1 weights ride along so sampling needs one file
    for (const auto& [name, t] : vq_params.items) ck.tensors.add(name, t);
    for (const auto& [name, t] : vq_buffers.items) ck.tensors.add(name, t);
    append_adam(params, opt, ck.tensors);
    return save_checkpoint(ck_path, ck);
  };

  auto csv = open_csv(tcfg.out_dir + "/stage2_loss.csv", "iter,nll", resuming);
  TrainResult result;
  int64_t done = start_iter;
  for (int64_t iter = start_iter; iter < tcfg.iterations; ++iter) {
    Rng it_rng(derive_seed(tcfg.seed, kIterStream + static_cast<uint64_t>(iter)));
    std::vector<int32_t> tokens;
    tokens.reserve(static_cast<size_t>(tcfg.batch * seq_len));
    RTensor slice = RTensor::zeros({tcfg.batch, 1, 1, data.h, data.w});
    RTensor onehot = RTensor::zeros({tcfg.batch, gcfg.num_classes});
    RTensor poro = RTensor::zeros({tcfg.batch, 1});
    for (int64_t b = 0; b < tcfg.batch; ++b) {
      const auto& ex = examples[it_rng.uniform_int(static_cast<uint64_t>(n_ex))];
      tokens.insert(tokens.end(), ex.tokens.begin(), ex.tokens.end());
      std::copy(ex.cond_slice.begin(), ex.cond_slice.end(), slice.data() + b * data.h * data.w);
      onehot.data()[b * gcfg.num_classes + ex.label] = real(1);
      poro.data()[b] = static_cast<real>(ex.porosity);
    }
    CondBatch cond{slice, onehot, poro};

    Tape<real> tape;
    RContext ctx{&tape, true, &it_rng};
    RTensor logits = gpt.forward(ctx, tokens, tcfg.batch, &cond);
    RTensor loss = gpt.nll(ctx, logits, tokens);
    double nll = loss.item();
    if (!std::isfinite(nll)) {
      save(iter);
      throw RuntimeFailure("stage 2 loss diverged at iteration " + std::to_string(iter) +
                           "; last good state saved to " + ck_path);
    }
    csv << iter << ',' << nll << '\n';
    result.curve.push_back(nll);
    tape.backward(loss);
    try {
      opt.step();
    } catch (const RuntimeFailure&) {
      save(iter);
      throw;
    }
    done = iter + 1;
    if (tcfg.stop_loss > 0 && nll < tcfg.stop_loss) break;
    if (tcfg.checkpoint_every > 0 && done % tcfg.checkpoint_every == 0) save(done);
  }
  csv.flush();
  result.checksum = save(done);
  result.checkpoint_path = ck_path;
  result.iterations_run = done;
  return result;
}

}  // namespace rockgpt
