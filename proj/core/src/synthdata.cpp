#include "mva/synthdata.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "mva/init.hpp"

namespace mva {

namespace {

constexpr char kMagic[4] = {'M', 'V', 'A', 'D'};
constexpr std::uint16_t kVersion = 1;
constexpr double kRampScale = 1.5;

void append_u16(std::vector<unsigned char>& out, std::uint16_t v) {
  out.push_back(static_cast<unsigned char>(v & 0xFF));
  out.push_back(static_cast<unsigned char>((v >> 8) & 0xFF));
}

void append_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xFF));
}

void append_u64(std::vector<unsigned char>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xFF));
}

void append_f64(std::vector<unsigned char>& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, sizeof(bits));
  append_u64(out, bits);
}

class Reader {
 public:
  Reader(const unsigned char* data, std::size_t size, const std::string& path)
      : data_(data), size_(size), pos_(0), path_(path) {}

  std::uint16_t u16() { return static_cast<std::uint16_t>(u_bytes(2)); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(u_bytes(4)); }
  std::uint64_t u64() { return u_bytes(8); }
  double f64() {
    const std::uint64_t bits = u_bytes(8);
    double v;
    std::memcpy(&v, &bits, sizeof(v));
    return v;
  }
  std::size_t pos() const { return pos_; }

 private:
  std::uint64_t u_bytes(int n) {
    if (pos_ + static_cast<std::size_t>(n) > size_) {
      throw std::runtime_error(path_ + ": truncated file, expected " + std::to_string(pos_ + static_cast<std::size_t>(n)) +
                               " bytes but only " + std::to_string(size_) + " available");
    }
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(data_[pos_ + static_cast<std::size_t>(i)]) << (8 * i);
    pos_ += static_cast<std::size_t>(n);
    return v;
  }

  const unsigned char* data_;
  std::size_t size_;
  std::size_t pos_;
  std::string path_;
};

void validate_spec(const DatasetSpec& spec) {
  auto bad = [](const std::string& msg) { throw std::invalid_argument("dataset spec: " + msg); };
  if (spec.n_pairs < 2 || spec.n_pairs % 2 != 0) bad("n_pairs must be even and >= 2");
  if (spec.appearance_classes < 1) bad("appearance_classes must be >= 1");
  if (spec.order_classes != 2) bad("order_classes must be 2 (forward/reversed)");
  if (spec.frames < 1 || spec.patches < 1 || spec.patch_dim < 1) bad("frame dimensions must be positive");
  if (spec.noise_std < 0.0) bad("noise_std must be nonnegative");
  if (spec.template_len < 6) bad("template_len must be >= 6 (BOS a o u w EOS)");
}

Tensor draw_pattern(const DatasetSpec& spec, const std::string& path) {
  Rng rng(substream(spec.seed, path));
  Tensor t = Tensor::zeros({spec.patches, spec.patch_dim});
  double* p = t.ptr();
  const std::int64_t n = t.size();
  for (std::int64_t i = 0; i < n; ++i) p[i] = rng.next_normal();
  return t;
}

SampleLabels decode_labels(const DatasetSpec& spec, const std::vector<int>& tokens) {
  if (tokens.size() < 6 || tokens[0] != kTokenBos) {
    throw std::runtime_error("dataset: malformed token sequence");
  }
  SampleLabels labels;
  labels.appearance = tokens[1] - kSpecialTokens;
  labels.order = tokens[2] - kSpecialTokens - spec.appearance_classes;
  if (labels.appearance < 0 || labels.appearance >= spec.appearance_classes || labels.order < 0 ||
      labels.order >= spec.order_classes) {
    throw std::runtime_error("dataset: token labels out of range");
  }
  return labels;
}

}  // namespace

int code_alphabet(int n_pairs) {
  const int clips = n_pairs / 2;
  int a = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(clips))));
  while (a * a < clips) ++a;
  return a;
}

int vocab_required(const DatasetSpec& spec) {
  return kSpecialTokens + spec.appearance_classes + spec.order_classes + 2 * code_alphabet(spec.n_pairs);
}

Dataset generate_dataset(const DatasetSpec& spec, int vocab_limit) {
  validate_spec(spec);
  if (vocab_required(spec) > vocab_limit) {
    throw std::invalid_argument("dataset spec: vocabulary of " + std::to_string(vocab_limit) +
                                " too small, need " + std::to_string(vocab_required(spec)) +
                                " ids for specials + classes + clip codes");
  }
  const int alpha = code_alphabet(spec.n_pairs);
  const int clips = spec.n_pairs / 2;

  std::vector<Tensor> protos;
  for (int a = 0; a < spec.appearance_classes; ++a) protos.push_back(draw_pattern(spec, "proto.a" + std::to_string(a)));
  std::vector<Tensor> code_u, code_w;
  for (int u = 0; u < alpha; ++u) code_u.push_back(draw_pattern(spec, "code.u" + std::to_string(u)));
  for (int w = 0; w < alpha; ++w) code_w.push_back(draw_pattern(spec, "code.w" + std::to_string(w)));
  Tensor ramp = draw_pattern(spec, "ramp");

  const std::int64_t grid = static_cast<std::int64_t>(spec.patches) * spec.patch_dim;
  Dataset dataset;
  dataset.spec = spec;
  dataset.samples.reserve(static_cast<std::size_t>(spec.n_pairs));

  for (int clip = 0; clip < clips; ++clip) {
    const int appearance = clip % spec.appearance_classes;
    const int u = clip / alpha;
    const int w = clip % alpha;

    // Base frames of the clip; the reversed twin reads them back to front.
    std::vector<std::vector<double>> base(static_cast<std::size_t>(spec.frames));
    for (int k = 0; k < spec.frames; ++k) {
      const double coeff =
          spec.frames == 1 ? 0.0 : (static_cast<double>(k) / (spec.frames - 1) - 0.5) * kRampScale;
      std::vector<double>& frame = base[static_cast<std::size_t>(k)];
      frame.resize(static_cast<std::size_t>(grid));
      const double* pp = protos[static_cast<std::size_t>(appearance)].ptr();
      const double* pu = code_u[static_cast<std::size_t>(u)].ptr();
      const double* pw = code_w[static_cast<std::size_t>(w)].ptr();
      const double* pr = ramp.ptr();
      for (std::int64_t i = 0; i < grid; ++i) frame[static_cast<std::size_t>(i)] = pp[i] + pu[i] + pw[i] + coeff * pr[i];
    }

    for (int order = 0; order < 2; ++order) {
      const int index = 2 * clip + order;
      VideoTextSample sample;
      sample.labels.appearance = appearance;
      sample.labels.order = order;
      Rng noise(substream(spec.seed, "noise.s" + std::to_string(index)));
      for (int k = 0; k < spec.frames; ++k) {
        const int src = order == 0 ? k : spec.frames - 1 - k;
        Tensor frame = Tensor::zeros({spec.patches, spec.patch_dim});
        double* pf = frame.ptr();
        const std::vector<double>& b = base[static_cast<std::size_t>(src)];
        for (std::int64_t i = 0; i < grid; ++i) pf[i] = b[static_cast<std::size_t>(i)] + spec.noise_std * noise.next_normal();
        sample.frames.push_back(std::move(frame));
      }
      sample.tokens = {kTokenBos,
                       kSpecialTokens + appearance,
                       kSpecialTokens + spec.appearance_classes + order,
                       kSpecialTokens + spec.appearance_classes + spec.order_classes + u,
                       kSpecialTokens + spec.appearance_classes + spec.order_classes + alpha + w,
                       kTokenEos};
      sample.tokens.resize(static_cast<std::size_t>(spec.template_len), kTokenPad);
      dataset.samples.push_back(std::move(sample));
    }
  }
  return dataset;
}

void save_dataset(const Dataset& dataset, const std::string& path) {
  const DatasetSpec& spec = dataset.spec;
  std::vector<unsigned char> buf;
  buf.insert(buf.end(), kMagic, kMagic + 4);
  append_u16(buf, kVersion);
  append_u32(buf, static_cast<std::uint32_t>(spec.n_pairs));
  append_u32(buf, static_cast<std::uint32_t>(spec.appearance_classes));
  append_u32(buf, static_cast<std::uint32_t>(spec.order_classes));
  append_u32(buf, static_cast<std::uint32_t>(spec.frames));
  append_u32(buf, static_cast<std::uint32_t>(spec.patches));
  append_u32(buf, static_cast<std::uint32_t>(spec.patch_dim));
  append_u32(buf, static_cast<std::uint32_t>(spec.template_len));
  append_f64(buf, spec.noise_std);
  append_u64(buf, spec.seed);
  for (const VideoTextSample& sample : dataset.samples) {
    for (const Tensor& frame : sample.frames) {
      const double* p = frame.ptr();
      const std::int64_t n = frame.size();
      for (std::int64_t i = 0; i < n; ++i) append_f64(buf, p[i]);
    }
    for (int t : sample.tokens) append_u16(buf, static_cast<std::uint16_t>(t));
  }
  const std::uint32_t crc = static_cast<std::uint32_t>(::crc32(0L, buf.data(), static_cast<uInt>(buf.size())));
  append_u32(buf, crc);

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!out) throw std::runtime_error("write failed for " + path);
}

Dataset load_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::vector<unsigned char> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  if (buf.size() < 4 || std::memcmp(buf.data(), kMagic, 4) != 0) {
    throw std::runtime_error(path + ": bad magic, not a dataset file");
  }
  Reader r(buf.data(), buf.size(), path);
  r.u32();  // magic, already checked
  const std::uint16_t version = r.u16();
  if (version != kVersion) {
    throw std::runtime_error(path + ": unsupported version " + std::to_string(version));
  }
  DatasetSpec spec;
  spec.n_pairs = static_cast<int>(r.u32());
  spec.appearance_classes = static_cast<int>(r.u32());
  spec.order_classes = static_cast<int>(r.u32());
  spec.frames = static_cast<int>(r.u32());
  spec.patches = static_cast<int>(r.u32());
  spec.patch_dim = static_cast<int>(r.u32());
  spec.template_len = static_cast<int>(r.u32());
  spec.noise_std = r.f64();
  spec.seed = r.u64();
  validate_spec(spec);

  const std::size_t header = r.pos();
  const std::size_t per_sample = static_cast<std::size_t>(spec.frames) * spec.patches * spec.patch_dim * 8 +
                                 static_cast<std::size_t>(spec.template_len) * 2;
  const std::size_t expected = header + static_cast<std::size_t>(spec.n_pairs) * per_sample + 4;
  if (buf.size() != expected) {
    throw std::runtime_error(path + ": truncated or oversized file, expected " + std::to_string(expected) +
                             " bytes, got " + std::to_string(buf.size()));
  }
  const std::uint32_t computed = static_cast<std::uint32_t>(::crc32(0L, buf.data(), static_cast<uInt>(buf.size() - 4)));
  std::uint32_t stored = 0;
  for (int i = 0; i < 4; ++i) stored |= static_cast<std::uint32_t>(buf[buf.size() - 4 + static_cast<std::size_t>(i)]) << (8 * i);
  if (stored != computed) {
    throw std::runtime_error(path + ": checksum mismatch at offset " + std::to_string(buf.size() - 4) + ", stored " +
                             std::to_string(stored) + ", computed " + std::to_string(computed));
  }

  Dataset dataset;
  dataset.spec = spec;
  dataset.samples.resize(static_cast<std::size_t>(spec.n_pairs));
  for (VideoTextSample& sample : dataset.samples) {
    sample.frames.reserve(static_cast<std::size_t>(spec.frames));
    for (int k = 0; k < spec.frames; ++k) {
      Tensor frame = Tensor::zeros({spec.patches, spec.patch_dim});
      double* p = frame.ptr();
      const std::int64_t n = frame.size();
      for (std::int64_t i = 0; i < n; ++i) p[i] = r.f64();
      sample.frames.push_back(std::move(frame));
    }
    sample.tokens.resize(static_cast<std::size_t>(spec.template_len));
    for (int& t : sample.tokens) t = static_cast<int>(r.u16());
    sample.labels = decode_labels(spec, sample.tokens);
  }
  return dataset;
}

VideoTextSample permute_frames(const VideoTextSample& sample, const std::vector<int>& indices) {
  const int frames = static_cast<int>(sample.frames.size());
  if (indices.empty() || static_cast<int>(indices.size()) > frames) {
    throw std::invalid_argument("permute_frames: index list size " + std::to_string(indices.size()) +
                                " invalid for " + std::to_string(frames) + " frames");
  }
  std::vector<bool> used(static_cast<std::size_t>(frames), false);
  for (int i : indices) {
    if (i < 0 || i >= frames) throw std::invalid_argument("permute_frames: index " + std::to_string(i) + " out of range");
    if (used[static_cast<std::size_t>(i)]) throw std::invalid_argument("permute_frames: duplicate index " + std::to_string(i));
    used[static_cast<std::size_t>(i)] = true;
  }
  VideoTextSample out;
  out.tokens = sample.tokens;
  out.labels = sample.labels;
  out.frames.reserve(indices.size());
  for (int i : indices) out.frames.push_back(sample.frames[static_cast<std::size_t>(i)]);
  return out;
}

std::vector<int> uniform_subsample_indices(int from, int to) {
  if (from < 1 || to < 1 || to > from) {
    throw std::invalid_argument("uniform_subsample_indices: cannot pick " + std::to_string(to) + " of " +
                                std::to_string(from));
  }
  std::vector<int> out(static_cast<std::size_t>(to));
  for (int k = 0; k < to; ++k) out[static_cast<std::size_t>(k)] = static_cast<int>((static_cast<std::int64_t>(k) * from) / to);
  return out;
}

void split_dataset(const Dataset& dataset, std::vector<int>& train_indices, std::vector<int>& test_indices) {
  const int clips = dataset.spec.n_pairs / 2;
  std::vector<int> order(static_cast<std::size_t>(clips));
  for (int i = 0; i < clips; ++i) order[static_cast<std::size_t>(i)] = i;
  Rng rng(substream(dataset.spec.seed, "split"));
  for (int i = clips - 1; i > 0; --i) {
    const int j = rng.next_int(i + 1);
    std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
  }
  const int train_clips = clips * 3 / 4;
  train_indices.clear();
  test_indices.clear();
  for (int i = 0; i < clips; ++i) {
    const int clip = order[static_cast<std::size_t>(i)];
    std::vector<int>& side = i < train_clips ? train_indices : test_indices;
    side.push_back(2 * clip);
    side.push_back(2 * clip + 1);
  }
  std::sort(train_indices.begin(), train_indices.end());
  std::sort(test_indices.begin(), test_indices.end());
}

}  // namespace mva
