#include "mva/trainer.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "mva/gradcheck.hpp"
#include "mva/ops.hpp"

namespace mva {

Tensor video_embedding(const ModelState& state, const std::vector<Tensor>& frames, bool adapters_enabled) {
  return project_video(state, pool_video(encode_frames(state, frames, adapters_enabled)));
}

Tensor text_embedding(const ModelState& state, const std::vector<int>& tokens, bool adapters_enabled) {
  return project_text(state, encode_text(state, tokens, adapters_enabled));
}

Tensor batch_loss(const ModelState& state, const Dataset& data, const std::vector<int>& batch_indices,
                  double weight_t2v) {
  if (batch_indices.size() < 2) {
    throw std::invalid_argument("batch_loss: contrastive loss needs a batch of >= 2, got " +
                                std::to_string(batch_indices.size()));
  }
  const int e = state.enc.embed_dim;
  std::vector<Tensor> v_rows, t_rows;
  v_rows.reserve(batch_indices.size());
  t_rows.reserve(batch_indices.size());
  for (int idx : batch_indices) {
    const VideoTextSample& s = data.samples.at(static_cast<std::size_t>(idx));
    v_rows.push_back(reshape(video_embedding(state, s.frames, true), {1, e}));
    t_rows.push_back(reshape(text_embedding(state, s.tokens, true), {1, e}));
  }
  Tensor v = l2_normalize(concat(v_rows, 0));
  Tensor t = l2_normalize(concat(t_rows, 0));
  Tensor sim = scale_by(matmul(v, transpose(t)), state.param("tau"));

  const int b = static_cast<int>(batch_indices.size());
  std::vector<int> diag(static_cast<std::size_t>(b));
  for (int i = 0; i < b; ++i) diag[static_cast<std::size_t>(i)] = i;
  Tensor v2t_ce = cross_entropy(sim, diag);             // rows: video queries over texts
  Tensor t2v_ce = cross_entropy(transpose(sim), diag);  // columns: text queries over videos
  return scale(add(v2t_ce, scale(t2v_ce, weight_t2v)), 0.5);
}

std::string TrainResult::log_text() const {
  std::string out;
  char buf[160];
  for (const StepLog& s : log) {
    std::snprintf(buf, sizeof(buf), "%lld %.6f %.6f %.6f\n", static_cast<long long>(s.step), s.loss, s.tau_eff, s.cap);
    out += buf;
  }
  return out;
}

namespace {

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
};

double clamp(double x, double lo, double hi) { return x < lo ? lo : (x > hi ? hi : x); }

}  // namespace

TrainResult train(ModelState& state, const Dataset& data, const std::vector<int>& train_indices,
                  const TrainSettings& cfg) {
  if (cfg.batch < 2) throw std::invalid_argument("train: batch size must be >= 2");
  const int steps_per_epoch = static_cast<int>(train_indices.size()) / cfg.batch;
  TrainResult result;
  if (cfg.epochs == 0) return result;
  if (steps_per_epoch == 0) {
    throw std::invalid_argument("train: " + std::to_string(train_indices.size()) +
                                " samples cannot fill a batch of " + std::to_string(cfg.batch));
  }
  std::int64_t total_steps = static_cast<std::int64_t>(cfg.epochs) * steps_per_epoch;
  if (cfg.max_steps > 0 && cfg.max_steps < total_steps) total_steps = cfg.max_steps;

  TauSchedule schedule;
  schedule.cap_start = cfg.tau_cap_start;
  schedule.cap_end = cfg.tau_cap_end;
  schedule.shape = cfg.tau_shape;
  // The last executed step logs exactly the cap floor.
  schedule.total_steps = total_steps > 1 ? total_steps - 1 : 1;

  // Moment buffers exist for exactly the tunable set, allocated up front.
  std::map<std::string, AdamState> moments;
  for (const std::string& path : state.tunable) {
    const std::int64_t n = state.param(path).size();
    moments[path] = AdamState{std::vector<double>(static_cast<std::size_t>(n), 0.0),
                              std::vector<double>(static_cast<std::size_t>(n), 0.0)};
  }

  Tensor tau = state.param("tau");
  std::int64_t step = 0;
  std::int64_t adam_t = 0;
  for (int epoch = 0; epoch < cfg.epochs && step < total_steps; ++epoch) {
    std::vector<int> order = train_indices;
    Rng rng(substream(cfg.seed, "epoch" + std::to_string(epoch)));
    for (int i = static_cast<int>(order.size()) - 1; i > 0; --i) {
      const int j = rng.next_int(i + 1);
      std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
    }
    for (int b = 0; b < steps_per_epoch && step < total_steps; ++b, ++step) {
      const double cap = tau_cap(step, schedule);
      (*tau.data)[0] = clamp((*tau.data)[0], 1.0, cap);
      const double tau_eff = (*tau.data)[0];

      std::vector<int> batch(order.begin() + static_cast<std::ptrdiff_t>(b) * cfg.batch,
                             order.begin() + static_cast<std::ptrdiff_t>(b + 1) * cfg.batch);
      GradGraph graph;
      double loss_value = 0.0;
      try {
        GradGraph::Scope scope(graph);
        Tensor loss = batch_loss(state, data, batch);
        loss_value = loss.item();
        if (!std::isfinite(loss_value)) {
          throw std::invalid_argument("non-finite loss");
        }
        graph.backward(loss);
      } catch (const std::invalid_argument& e) {
        throw std::runtime_error("train: diverged at step " + std::to_string(step) + " (" + e.what() + ")");
      }

      ++adam_t;
      const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(adam_t));
      const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(adam_t));
      for (const std::string& path : state.tunable) {
        const Tensor& p = state.param(path);
        AdamState& ms = moments[path];
        std::vector<double> grad_storage;
        const double* g = nullptr;
        if (graph.has_grad(p)) {
          grad_storage = *graph.grad(p).data;
          g = grad_storage.data();
        }
        double* w = p.data->data();
        const std::int64_t n = p.size();
        for (std::int64_t i = 0; i < n; ++i) {
          const double gi = g ? g[i] : 0.0;
          ms.m[static_cast<std::size_t>(i)] = cfg.beta1 * ms.m[static_cast<std::size_t>(i)] + (1.0 - cfg.beta1) * gi;
          ms.v[static_cast<std::size_t>(i)] = cfg.beta2 * ms.v[static_cast<std::size_t>(i)] + (1.0 - cfg.beta2) * gi * gi;
          const double m_hat = ms.m[static_cast<std::size_t>(i)] / bc1;
          const double v_hat = ms.v[static_cast<std::size_t>(i)] / bc2;
          w[i] -= cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
        }
      }
      (*tau.data)[0] = clamp((*tau.data)[0], 1.0, cap);

      result.log.push_back(StepLog{step, loss_value, tau_eff, cap});
    }
  }
  return result;
}

std::pair<MetricsReport, MetricsReport> evaluate(const ModelState& state, const Dataset& data,
                                                 const std::vector<int>& indices) {
  if (indices.empty()) throw std::invalid_argument("evaluate: empty index list");
  const int n = static_cast<int>(indices.size());
  const int e = state.enc.embed_dim;
  std::vector<double> v_feat(static_cast<std::size_t>(n) * e);
  std::vector<double> t_feat(static_cast<std::size_t>(n) * e);
  for (int i = 0; i < n; ++i) {
    const VideoTextSample& s = data.samples.at(static_cast<std::size_t>(indices[static_cast<std::size_t>(i)]));
    Tensor v = l2_normalize(reshape(video_embedding(state, s.frames, true), {1, e}));
    Tensor t = l2_normalize(reshape(text_embedding(state, s.tokens, true), {1, e}));
    std::memcpy(v_feat.data() + static_cast<std::size_t>(i) * e, v.ptr(), sizeof(double) * static_cast<std::size_t>(e));
    std::memcpy(t_feat.data() + static_cast<std::size_t>(i) * e, t.ptr(), sizeof(double) * static_cast<std::size_t>(e));
  }
  std::vector<double> t2v(static_cast<std::size_t>(n) * n);
  std::vector<double> v2t(static_cast<std::size_t>(n) * n);
  for (int q = 0; q < n; ++q) {
    for (int g = 0; g < n; ++g) {
      double dot_tv = 0.0, dot_vt = 0.0;
      for (int c = 0; c < e; ++c) {
        dot_tv += t_feat[static_cast<std::size_t>(q) * e + c] * v_feat[static_cast<std::size_t>(g) * e + c];
        dot_vt += v_feat[static_cast<std::size_t>(q) * e + c] * t_feat[static_cast<std::size_t>(g) * e + c];
      }
      t2v[static_cast<std::size_t>(q) * n + g] = dot_tv;
      v2t[static_cast<std::size_t>(q) * n + g] = dot_vt;
    }
  }
  std::vector<int> identity(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) identity[static_cast<std::size_t>(i)] = i;
  return {recall_at_k(t2v, n, n, identity, "T2V"), recall_at_k(v2t, n, n, identity, "V2T")};
}

ParamReport count_params(const EncoderConfig& enc, const AdapterConfig& ad) {
  static const char* kCategories[] = {"backbone.vision", "backbone.text", "backbone.proj", "down",
                                      "trm",             "up",            "calibration",   "cmi",
                                      "tau"};
  ParamReport report;
  std::map<std::string, std::int64_t> sums;
  for (const char* c : kCategories) sums[c] = 0;
  for (const ParamSpec& spec : enumerate_params(enc, ad)) {
    const std::int64_t n = shape_size(spec.shape);
    report.total += n;
    if (spec.tunable) report.tunable += n;
    sums[spec.category] += n;
  }
  for (const char* c : kCategories) report.breakdown.emplace_back(c, sums[c]);
  report.ratio_percent = 100.0 * static_cast<double>(report.tunable) / static_cast<double>(report.total);
  return report;
}

std::string format_param_report(const ParamReport& report) {
  std::string out = "component            params\n";
  char buf[96];
  for (const auto& [name, count] : report.breakdown) {
    std::snprintf(buf, sizeof(buf), "%-20s %lld\n", name.c_str(), static_cast<long long>(count));
    out += buf;
  }
  std::snprintf(buf, sizeof(buf), "%-20s %lld\n", "total", static_cast<long long>(report.total));
  out += buf;
  std::snprintf(buf, sizeof(buf), "%-20s %lld\n", "tunable", static_cast<long long>(report.tunable));
  out += buf;
  std::snprintf(buf, sizeof(buf), "%-20s %.4f\n", "ratio_percent", report.ratio_percent);
  out += buf;
  return out;
}

double storage_units(int n_tasks, double ratio, bool shared_backbone) {
  if (n_tasks < 0) throw std::invalid_argument("storage_units: task count must be nonnegative");
  if (!(ratio >= 0.0 && ratio <= 1.0)) throw std::invalid_argument("storage_units: ratio must be in [0,1]");
  if (!shared_backbone) return static_cast<double>(n_tasks);
  return 1.0 + static_cast<double>(n_tasks) * ratio;
}

namespace {

constexpr char kCkptMagic[4] = {'M', 'V', 'C', 'K'};
constexpr std::uint16_t kCkptVersion = 1;

void ck_append_u16(std::vector<unsigned char>& out, std::uint16_t v) {
  out.push_back(static_cast<unsigned char>(v & 0xFF));
  out.push_back(static_cast<unsigned char>((v >> 8) & 0xFF));
}

void ck_append_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xFF));
}

void ck_append_u64(std::vector<unsigned char>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xFF));
}

void ck_append_f64(std::vector<unsigned char>& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, sizeof(bits));
  ck_append_u64(out, bits);
}

struct CkReader {
  const unsigned char* data;
  std::size_t size;
  std::size_t pos = 0;
  std::string path;

  std::uint64_t bytes(int n) {
    if (pos + static_cast<std::size_t>(n) > size) {
      throw std::runtime_error(path + ": truncated checkpoint, expected " +
                               std::to_string(pos + static_cast<std::size_t>(n)) + " bytes, got " + std::to_string(size));
    }
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(data[pos + static_cast<std::size_t>(i)]) << (8 * i);
    pos += static_cast<std::size_t>(n);
    return v;
  }
  std::uint16_t u16() { return static_cast<std::uint16_t>(bytes(2)); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(bytes(4)); }
  std::uint64_t u64() { return bytes(8); }
  double f64() {
    const std::uint64_t b = bytes(8);
    double v;
    std::memcpy(&v, &b, sizeof(v));
    return v;
  }
  std::string str(std::size_t n) {
    if (pos + n > size) throw std::runtime_error(path + ": truncated checkpoint string");
    std::string s(reinterpret_cast<const char*>(data + pos), n);
    pos += n;
    return s;
  }
};

}  // namespace

void save_checkpoint(const ModelState& state, const RunConfig& config, const std::string& path) {
  const std::string config_text = config.canonical_text();
  std::vector<unsigned char> buf;
  buf.insert(buf.end(), kCkptMagic, kCkptMagic + 4);
  ck_append_u16(buf, kCkptVersion);
  ck_append_u64(buf, config.hash());
  ck_append_u32(buf, static_cast<std::uint32_t>(config_text.size()));
  buf.insert(buf.end(), config_text.begin(), config_text.end());
  ck_append_u32(buf, static_cast<std::uint32_t>(state.tunable.size()));
  for (const std::string& p : state.tunable) {
    const Tensor& t = state.param(p);
    ck_append_u16(buf, static_cast<std::uint16_t>(p.size()));
    buf.insert(buf.end(), p.begin(), p.end());
    ck_append_u16(buf, static_cast<std::uint16_t>(t.rank()));
    for (int d : t.shape) ck_append_u32(buf, static_cast<std::uint32_t>(d));
    const double* v = t.ptr();
    const std::int64_t n = t.size();
    for (std::int64_t i = 0; i < n; ++i) ck_append_f64(buf, v[i]);
  }
  const std::uint32_t crc = static_cast<std::uint32_t>(::crc32(0L, buf.data(), static_cast<uInt>(buf.size())));
  ck_append_u32(buf, crc);

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!out) throw std::runtime_error("write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::vector<unsigned char> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (buf.size() < 10 || std::memcmp(buf.data(), kCkptMagic, 4) != 0) {
    throw std::runtime_error(path + ": bad magic, not a checkpoint file");
  }
  if (buf.size() < 4) throw std::runtime_error(path + ": truncated checkpoint");
  const std::uint32_t computed = static_cast<std::uint32_t>(::crc32(0L, buf.data(), static_cast<uInt>(buf.size() - 4)));
  std::uint32_t stored = 0;
  for (int i = 0; i < 4; ++i) stored |= static_cast<std::uint32_t>(buf[buf.size() - 4 + static_cast<std::size_t>(i)]) << (8 * i);
  if (stored != computed) {
    throw std::runtime_error(path + ": checksum mismatch, stored " + std::to_string(stored) + ", computed " +
                             std::to_string(computed));
  }

  CkReader r{buf.data(), buf.size() - 4, 0, path};
  r.u32();  // magic
  const std::uint16_t version = r.u16();
  if (version != kCkptVersion) throw std::runtime_error(path + ": unsupported checkpoint version " + std::to_string(version));
  const std::uint64_t stored_hash = r.u64();
  const std::uint32_t text_len = r.u32();
  const std::string config_text = r.str(text_len);
  if (fnv1a64(config_text) != stored_hash) {
    throw std::runtime_error(path + ": config hash mismatch (wrong backbone or tampered file)");
  }

  Checkpoint ck{RunConfig::parse_text(config_text), ModelState{}};
  const TrainSettings ts = ck.config.train();
  ck.state = build_model(ck.config.encoder(), ck.config.adapter(), ts.seed, ts.tau_init);

  const std::uint32_t n_blocks = r.u32();
  if (n_blocks != ck.state.tunable.size()) {
    throw std::runtime_error(path + ": checkpoint holds " + std::to_string(n_blocks) + " tensors, model expects " +
                             std::to_string(ck.state.tunable.size()));
  }
  for (std::uint32_t bi = 0; bi < n_blocks; ++bi) {
    const std::uint16_t name_len = r.u16();
    const std::string name = r.str(name_len);
    const std::uint16_t rank = r.u16();
    std::vector<int> shape(rank);
    for (int d = 0; d < rank; ++d) shape[static_cast<std::size_t>(d)] = static_cast<int>(r.u32());
    auto it = ck.state.params.find(name);
    if (it == ck.state.params.end() || !ck.state.is_tunable(name)) {
      throw std::runtime_error(path + ": unexpected tensor '" + name + "' in checkpoint");
    }
    if (it->second.shape != shape) {
      throw std::runtime_error(path + ": shape mismatch for '" + name + "', checkpoint " + shape_str(shape) +
                               " vs model " + shape_str(it->second.shape));
    }
    double* w = it->second.data->data();
    const std::int64_t n = it->second.size();
    for (std::int64_t i = 0; i < n; ++i) w[i] = r.f64();
  }
  if (r.pos != r.size) throw std::runtime_error(path + ": trailing bytes in checkpoint");
  return ck;
}

ModelState clone_state(const ModelState& state) {
  ModelState out;
  out.enc = state.enc;
  out.adapter = state.adapter;
  out.tunable = state.tunable;
  for (const auto& [path, t] : state.params) out.params.emplace(path, t.clone());
  return out;
}

double model_gradcheck(const RunConfig& config, double eps, int threads) {
  DatasetSpec spec = config.dataset();
  spec.n_pairs = 2;  // one clip: a forward and a reversed sample
  const EncoderConfig enc = config.encoder();
  const Dataset data = generate_dataset(spec, enc.vocab_size);
  const std::vector<int> batch = {0, 1};
  const TrainSettings ts = config.train();
  ModelState state = build_model(enc, config.adapter(), ts.seed, ts.tau_init);

  std::unordered_map<std::string, Tensor> analytic;
  {
    GradGraph graph;
    GradGraph::Scope scope(graph);
    Tensor loss = batch_loss(state, data, batch);
    graph.backward(loss);
    analytic = collect_gradients(graph, state.tunable_params());
  }

  if (threads <= 0) {
    const unsigned hw = std::thread::hardware_concurrency();
    threads = hw ? static_cast<int>(hw) : 1;
  }
  const auto all_params = state.tunable_params();
  if (threads > static_cast<int>(all_params.size())) threads = static_cast<int>(all_params.size());
  if (threads <= 1) {
    auto loss_fn = [&]() { return batch_loss(state, data, batch).item(); };
    return finite_diff_check(loss_fn, all_params, analytic, eps);
  }

  std::vector<double> shard_max(static_cast<std::size_t>(threads), 0.0);
  std::vector<std::thread> pool;
  for (int ti = 0; ti < threads; ++ti) {
    pool.emplace_back([&, ti]() {
      ModelState local = clone_state(state);
      auto loss_fn = [&local, &data, &batch]() { return batch_loss(local, data, batch).item(); };
      std::vector<std::pair<std::string, Tensor>> shard;
      for (std::size_t i = static_cast<std::size_t>(ti); i < all_params.size(); i += static_cast<std::size_t>(threads)) {
        shard.emplace_back(all_params[i].first, local.param(all_params[i].first));
      }
      shard_max[static_cast<std::size_t>(ti)] = finite_diff_check(loss_fn, shard, analytic, eps);
    });
  }
  for (std::thread& t : pool) t.join();
  double max_err = 0.0;
  for (double v : shard_max) max_err = std::max(max_err, v);
  return max_err;
}

}  // namespace mva
