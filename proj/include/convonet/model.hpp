#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "convonet/error.hpp"
#include "convonet/layers.hpp"
#include "convonet/text.hpp"

namespace convonet {

struct KernelSize {
  std::size_t h = 1;
  std::size_t w = 1;
  bool operator==(const KernelSize&) const = default;
};

enum class Task { binary, multiclass };
enum class OptimizerKind { adam, rmsprop };

inline const char* to_string(OptimizerKind k) {
  return k == OptimizerKind::adam ? "adam" : "rmsprop";
}
inline const char* to_string(Task t) {
  return t == Task::binary ? "binary" : "multiclass";
}

// One row of the model catalog. Kernel lists and layer widths are fixed per
// variant; num_classes/task are filled in from the dataset at build time.
struct ArchitectureConfig {
  std::string name;
  std::vector<KernelSize> intra_kernels;  // height exactly 1
  std::vector<KernelSize> inter_kernels;  // height >= 2
  std::size_t filters = 32;
  std::size_t dense_units = 64;
  double dropout_rate = 0.4;
  OptimizerKind optimizer = OptimizerKind::adam;
  std::size_t num_classes = 2;
  Task task = Task::binary;

  std::size_t pathway_count() const {
    return intra_kernels.size() + inter_kernels.size();
  }
  std::vector<KernelSize> all_kernels() const {
    std::vector<KernelSize> all = intra_kernels;
    all.insert(all.end(), inter_kernels.begin(), inter_kernels.end());
    return all;
  }
};

inline void validate(const ArchitectureConfig& cfg) {
  if (cfg.pathway_count() == 0)
    throw InputError("config '" + cfg.name + "': no convolution pathways");
  for (const auto& k : cfg.intra_kernels)
    if (k.h != 1)
      throw InputError("config '" + cfg.name +
                       "': intra-sentence kernels must have height 1");
  for (const auto& k : cfg.inter_kernels)
    if (k.h < 2)
      throw InputError("config '" + cfg.name +
                       "': inter-sentence kernels must have height >= 2");
  if (cfg.filters == 0)
    throw InputError("config '" + cfg.name + "': filters must be >= 1");
  if (cfg.dropout_rate < 0.0 || cfg.dropout_rate >= 1.0)
    throw InputError("config '" + cfg.name + "': dropout must lie in [0,1)");
}

// TextConvoNet_4, TextConvoNet_6, the 24 ablation versions V1.1..V4.6 and
// the 1-D Kim baseline (empty inter list, whole text as a single row).
inline std::vector<ArchitectureConfig> catalog() {
  std::vector<ArchitectureConfig> out;

  auto entry = [&](std::string name, std::vector<KernelSize> intra,
                   std::vector<KernelSize> inter, std::size_t filters,
                   double dropout, OptimizerKind opt, std::size_t dense) {
    ArchitectureConfig cfg;
    cfg.name = std::move(name);
    cfg.intra_kernels = std::move(intra);
    cfg.inter_kernels = std::move(inter);
    cfg.filters = filters;
    cfg.dropout_rate = dropout;
    cfg.optimizer = opt;
    cfg.dense_units = dense;
    out.push_back(std::move(cfg));
  };

  entry("TextConvoNet_4", {{1, 2}, {1, 3}}, {{2, 1}, {2, 2}}, 32, 0.4,
        OptimizerKind::adam, 64);
  entry("TextConvoNet_6", {{1, 2}, {1, 3}, {1, 4}}, {{2, 1}, {2, 2}, {2, 3}},
        32, 0.4, OptimizerKind::adam, 64);

  const std::array<std::pair<std::vector<KernelSize>, std::vector<KernelSize>>,
                   4>
      groups = {{
          {{{1, 2}, {1, 3}, {1, 4}}, {{2, 1}, {2, 2}, {2, 3}}},
          {{{1, 3}, {1, 4}, {1, 5}}, {{2, 2}, {2, 3}, {2, 4}}},
          {{{1, 2}, {1, 3}, {1, 4}}, {{3, 1}, {3, 2}, {3, 3}}},
          {{{1, 3}, {1, 4}, {1, 5}}, {{3, 2}, {3, 3}, {3, 4}}},
      }};
  struct Sub {
    std::size_t filters;
    double dropout;
    OptimizerKind opt;
    std::size_t dense;
  };
  const std::array<Sub, 6> subs = {{
      {32, 0.4, OptimizerKind::adam, 64},
      {32, 0.4, OptimizerKind::rmsprop, 64},
      {48, 0.4, OptimizerKind::adam, 64},
      {48, 0.5, OptimizerKind::adam, 64},
      {32, 0.4, OptimizerKind::adam, 96},
      {32, 0.5, OptimizerKind::adam, 96},
  }};
  for (std::size_t g = 0; g < groups.size(); ++g) {
    for (std::size_t s = 0; s < subs.size(); ++s) {
      entry("V" + std::to_string(g + 1) + "." + std::to_string(s + 1),
            groups[g].first, groups[g].second, subs[s].filters,
            subs[s].dropout, subs[s].opt, subs[s].dense);
    }
  }

  entry("Kim", {{1, 3}, {1, 4}, {1, 5}}, {}, 100, 0.4, OptimizerKind::adam,
        64);
  return out;
}

inline ArchitectureConfig catalog_lookup(const std::string& name) {
  for (auto& cfg : catalog())
    if (cfg.name == name) return cfg;
  std::string known;
  for (const auto& cfg : catalog()) {
    if (!known.empty()) known += ", ";
    known += cfg.name;
  }
  throw InputError("unknown model '" + name + "'; known models: " + known);
}

// One conv->relu->pool pathway per kernel, concatenated into a dense stack.
template <typename T>
struct Model {
  ArchitectureConfig config;
  std::size_t m = 0, n = 0, z = 0;
  std::uint64_t seed = 0;
  std::vector<std::string> class_names;  // training-time label order
  std::vector<Conv2DLayer<T>> pathways;
  DenseLayer<T> hidden;  // relu
  DenseLayer<T> output;  // identity; classify() turns logits into probs

  std::size_t concat_width() const {
    return pathways.size() * config.filters;
  }
  std::size_t output_units() const {
    return config.task == Task::binary ? 1 : config.num_classes;
  }
};

namespace detail {
// Glorot-uniform bound over fan-in/fan-out, biases zero.
template <typename T>
void glorot_fill(TensorT<T>& t, double fan_in, double fan_out,
                 std::mt19937& rng) {
  const double bound = std::sqrt(6.0 / (fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (T& v : t.vec()) v = static_cast<T>(dist(rng));
}
}  // namespace detail

template <typename T = float>
Model<T> build(const ArchitectureConfig& config, std::size_t m, std::size_t n,
               std::size_t z, std::uint64_t seed) {
  validate(config);
  if (m == 0 || n == 0 || z == 0)
    throw InputError("build: m, n, z must all be >= 1");
  Model<T> model;
  model.config = config;
  model.m = m;
  model.n = n;
  model.z = z;
  model.seed = seed;

  std::mt19937 rng(static_cast<std::mt19937::result_type>(seed));
  for (const auto& k : config.all_kernels()) {
    if (k.h > m || k.w > n)
      throw InputError("model '" + config.name + "': kernel (" +
                       std::to_string(k.h) + "x" + std::to_string(k.w) +
                       ") does not fit input m=" + std::to_string(m) +
                       ", n=" + std::to_string(n) +
                       "; raise m or n (or pick a smaller variant)");
    Conv2DLayer<T> layer;
    layer.kernels = TensorT<T>({config.filters, k.h, k.w, z}, T(0));
    layer.biases = TensorT<T>({config.filters}, T(0));
    const double fan = static_cast<double>(k.h * k.w * z);
    detail::glorot_fill(layer.kernels, fan,
                        static_cast<double>(k.h * k.w * config.filters), rng);
    model.pathways.push_back(std::move(layer));
  }

  const std::size_t cw = model.concat_width();
  model.hidden.weights = TensorT<T>({cw, config.dense_units}, T(0));
  model.hidden.biases = TensorT<T>({config.dense_units}, T(0));
  model.hidden.activation = Activation::relu;
  detail::glorot_fill(model.hidden.weights, static_cast<double>(cw),
                      static_cast<double>(config.dense_units), rng);

  const std::size_t ow = model.output_units();
  model.output.weights = TensorT<T>({config.dense_units, ow}, T(0));
  model.output.biases = TensorT<T>({ow}, T(0));
  model.output.activation = Activation::identity;
  detail::glorot_fill(model.output.weights,
                      static_cast<double>(config.dense_units),
                      static_cast<double>(ow), rng);
  return model;
}

// Canonical parameter order: per-pathway kernels+biases, hidden W+b,
// output W+b. Optimizers, gradients and checkpoints all follow it.
template <typename T>
std::vector<TensorT<T>*> parameters(Model<T>& model) {
  std::vector<TensorT<T>*> out;
  for (auto& pw : model.pathways) {
    out.push_back(&pw.kernels);
    out.push_back(&pw.biases);
  }
  out.push_back(&model.hidden.weights);
  out.push_back(&model.hidden.biases);
  out.push_back(&model.output.weights);
  out.push_back(&model.output.biases);
  return out;
}

template <typename T>
std::vector<const TensorT<T>*> parameters(const Model<T>& model) {
  std::vector<const TensorT<T>*> out;
  for (const auto& pw : model.pathways) {
    out.push_back(&pw.kernels);
    out.push_back(&pw.biases);
  }
  out.push_back(&model.hidden.weights);
  out.push_back(&model.hidden.biases);
  out.push_back(&model.output.weights);
  out.push_back(&model.output.biases);
  return out;
}

template <typename T>
std::size_t param_count(const Model<T>& model) {
  std::size_t total = 0;
  for (const auto* p : parameters(model)) total += p->size();
  return total;
}

template <typename T>
struct ForwardCache {
  TensorT<T> input;
  std::vector<TensorT<T>> conv_pre;  // pre-relu feature maps per pathway
  std::vector<PoolResult<T>> pools;
  TensorT<T> concat_out;
  TensorT<T> hidden_pre;
  TensorT<T> hidden_out;
  TensorT<T> drop_mask;
  TensorT<T> dropped;
  TensorT<T> logits;
};

// Probabilities per classify(); fills the cache only when one is supplied
// (training). Dropout draws from rng in train mode.
template <typename T>
TensorT<T> forward(const Model<T>& model, const ParagraphTensorT<T>& paragraph,
                   Mode mode, std::mt19937* rng = nullptr,
                   ForwardCache<T>* cache = nullptr) {
  const auto& in = paragraph.data;
  if (in.shape() != std::vector<std::size_t>{model.m, model.n, model.z})
    throw std::invalid_argument("forward: paragraph dims " +
                                shape_str(in.shape()) + " != model dims " +
                                shape_str({model.m, model.n, model.z}));
  if (mode == Mode::train && model.config.dropout_rate > 0.0 && rng == nullptr)
    throw std::logic_error("forward: train mode needs an rng for dropout");

  std::vector<TensorT<T>> pooled;
  if (cache) {
    cache->input = in;
    cache->conv_pre.clear();
    cache->pools.clear();
  }
  for (const auto& pathway : model.pathways) {
    TensorT<T> pre = conv2d_forward(pathway, in);
    TensorT<T> act = relu_forward(pre);
    PoolResult<T> pool = global_max_pool(act);
    pooled.push_back(pool.values);
    if (cache) {
      cache->conv_pre.push_back(std::move(pre));
      cache->pools.push_back(std::move(pool));
    }
  }

  TensorT<T> cat = concat(pooled);
  DenseResult<T> hidden = dense_forward(model.hidden, cat);

  std::mt19937 unused_rng;
  DropoutResult<T> drop =
      dropout(hidden.out, model.config.dropout_rate, mode,
              rng ? *rng : unused_rng);

  DenseResult<T> out = dense_forward(model.output, drop.out);
  TensorT<T> probs = classify(out.out);

  if (cache) {
    cache->concat_out = std::move(cat);
    cache->hidden_pre = std::move(hidden.preact);
    cache->hidden_out = std::move(hidden.out);
    cache->drop_mask = std::move(drop.mask);
    cache->dropped = std::move(drop.out);
    cache->logits = std::move(out.preact);
  }
  return probs;
}

// Parameter gradients in canonical order, given d(loss)/d(logits).
template <typename T>
std::vector<TensorT<T>> backward(const Model<T>& model,
                                 const ForwardCache<T>& cache,
                                 const TensorT<T>& logit_grad) {
  DenseGrads<T> out_grads =
      dense_backward(model.output, cache.dropped, cache.logits, logit_grad);
  TensorT<T> d_hidden_out = dropout_backward(cache.drop_mask, out_grads.input);
  DenseGrads<T> hid_grads = dense_backward(model.hidden, cache.concat_out,
                                           cache.hidden_pre, d_hidden_out);

  std::vector<std::size_t> part_sizes(model.pathways.size(),
                                      model.config.filters);
  std::vector<TensorT<T>> d_pools =
      concat_backward(hid_grads.input, part_sizes);

  std::vector<TensorT<T>> grads;
  for (std::size_t i = 0; i < model.pathways.size(); ++i) {
    const auto& pre = cache.conv_pre[i];
    TensorT<T> d_act = global_max_pool_backward(
        d_pools[i], cache.pools[i].argmax, pre.shape()[0], pre.shape()[1]);
    TensorT<T> d_pre = relu_backward(pre, d_act);
    Conv2DGrads<T> cg = conv2d_backward(model.pathways[i], cache.input, d_pre);
    grads.push_back(std::move(cg.kernels));
    grads.push_back(std::move(cg.biases));
  }
  grads.push_back(std::move(hid_grads.weights));
  grads.push_back(std::move(hid_grads.biases));
  grads.push_back(std::move(out_grads.weights));
  grads.push_back(std::move(out_grads.biases));
  return grads;
}

// ---------------------------------------------------------------------------
// Checkpoint format: "TCVN" magic, u16 version, u32 JSON length + config
// JSON, then per-parameter blocks (u32 rank, u32 extents..., f32 data),
// all little-endian, parameters in canonical order.
// ---------------------------------------------------------------------------

inline constexpr std::uint16_t kCheckpointVersion = 1;

namespace detail {

template <typename U>
U byteswap_int(U v) {
  U out = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    out = static_cast<U>(out << 8);
    out |= static_cast<U>(v & 0xFF);
    v = static_cast<U>(v >> 8);
  }
  return out;
}

template <typename U>
U to_le(U v) {
  if constexpr (std::endian::native == std::endian::big)
    return byteswap_int(v);
  return v;
}

struct ByteWriter {
  std::ofstream out;
  explicit ByteWriter(const std::string& path)
      : out(path, std::ios::binary) {
    if (!out) throw InputError("cannot open checkpoint for writing: " + path);
  }
  void bytes(const void* p, std::size_t len) {
    out.write(static_cast<const char*>(p), static_cast<std::streamsize>(len));
  }
  template <typename U>
  void le(U v) {
    U w = to_le(v);
    bytes(&w, sizeof(w));
  }
  void f32(float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    le(bits);
  }
};

struct ByteReader {
  std::ifstream in;
  std::size_t offset = 0;
  std::string path;
  explicit ByteReader(const std::string& p) : in(p, std::ios::binary), path(p) {
    if (!in) throw InputError("cannot open checkpoint: " + p);
  }
  void bytes(void* p, std::size_t len) {
    in.read(static_cast<char*>(p), static_cast<std::streamsize>(len));
    if (static_cast<std::size_t>(in.gcount()) != len)
      throw InputError(path + ": truncated checkpoint at offset " +
                       std::to_string(offset));
    offset += len;
  }
  template <typename U>
  U le() {
    U v;
    bytes(&v, sizeof(v));
    return to_le(v);
  }
  float f32() {
    std::uint32_t bits = le<std::uint32_t>();
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
  }
};

inline nlohmann::json config_to_json(const ArchitectureConfig& cfg,
                                     std::size_t m, std::size_t n,
                                     std::size_t z, std::uint64_t seed) {
  nlohmann::json j;
  j["name"] = cfg.name;
  auto kernels = [](const std::vector<KernelSize>& ks) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& k : ks) arr.push_back({k.h, k.w});
    return arr;
  };
  j["intra_kernels"] = kernels(cfg.intra_kernels);
  j["inter_kernels"] = kernels(cfg.inter_kernels);
  j["filters"] = cfg.filters;
  j["dense_units"] = cfg.dense_units;
  j["dropout_rate"] = cfg.dropout_rate;
  j["optimizer"] = to_string(cfg.optimizer);
  j["num_classes"] = cfg.num_classes;
  j["task"] = to_string(cfg.task);
  j["m"] = m;
  j["n"] = n;
  j["z"] = z;
  j["seed"] = seed;
  return j;
}

inline ArchitectureConfig config_from_json(const nlohmann::json& j) {
  ArchitectureConfig cfg;
  cfg.name = j.at("name").get<std::string>();
  auto kernels = [](const nlohmann::json& arr) {
    std::vector<KernelSize> out;
    for (const auto& k : arr) out.push_back({k.at(0), k.at(1)});
    return out;
  };
  cfg.intra_kernels = kernels(j.at("intra_kernels"));
  cfg.inter_kernels = kernels(j.at("inter_kernels"));
  cfg.filters = j.at("filters").get<std::size_t>();
  cfg.dense_units = j.at("dense_units").get<std::size_t>();
  cfg.dropout_rate = j.at("dropout_rate").get<double>();
  cfg.optimizer = j.at("optimizer").get<std::string>() == "rmsprop"
                      ? OptimizerKind::rmsprop
                      : OptimizerKind::adam;
  cfg.num_classes = j.at("num_classes").get<std::size_t>();
  cfg.task = j.at("task").get<std::string>() == "multiclass"
                 ? Task::multiclass
                 : Task::binary;
  return cfg;
}

}  // namespace detail

inline void save(const Model<float>& model, const std::string& path) {
  detail::ByteWriter w(path);
  w.bytes("TCVN", 4);
  w.le<std::uint16_t>(kCheckpointVersion);
  nlohmann::json meta = detail::config_to_json(model.config, model.m, model.n,
                                               model.z, model.seed);
  meta["class_names"] = model.class_names;
  const std::string json = meta.dump();
  w.le<std::uint32_t>(static_cast<std::uint32_t>(json.size()));
  w.bytes(json.data(), json.size());
  for (const auto* p : parameters(model)) {
    w.le<std::uint32_t>(static_cast<std::uint32_t>(p->rank()));
    for (std::size_t e : p->shape())
      w.le<std::uint32_t>(static_cast<std::uint32_t>(e));
    for (float v : p->vec()) w.f32(v);
  }
  if (!w.out) throw InputError("checkpoint write failed: " + path);
}

inline Model<float> load(const std::string& path) {
  detail::ByteReader r(path);
  char magic[4];
  r.bytes(magic, 4);
  if (std::memcmp(magic, "TCVN", 4) != 0)
    throw InputError(path + ": bad checkpoint magic at offset 0");
  const std::uint16_t version = r.le<std::uint16_t>();
  if (version != kCheckpointVersion)
    throw InputError(path + ": unsupported checkpoint version " +
                     std::to_string(version) + " (expected " +
                     std::to_string(kCheckpointVersion) + ") at offset 4");
  const std::uint32_t json_len = r.le<std::uint32_t>();
  std::string json(json_len, '\0');
  r.bytes(json.data(), json_len);

  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json);
  } catch (const nlohmann::json::exception& e) {
    throw InputError(path + ": bad checkpoint config blob: " + e.what());
  }
  ArchitectureConfig cfg = detail::config_from_json(j);
  Model<float> model =
      build<float>(cfg, j.at("m").get<std::size_t>(),
                   j.at("n").get<std::size_t>(), j.at("z").get<std::size_t>(),
                   j.at("seed").get<std::uint64_t>());
  if (j.contains("class_names"))
    model.class_names = j.at("class_names").get<std::vector<std::string>>();

  for (auto* p : parameters(model)) {
    const std::size_t block_off = r.offset;
    const std::uint32_t rank = r.le<std::uint32_t>();
    if (rank != p->rank())
      throw InputError(path + ": parameter rank mismatch at offset " +
                       std::to_string(block_off));
    std::vector<std::size_t> shape(rank);
    for (auto& e : shape) e = r.le<std::uint32_t>();
    if (shape != p->shape())
      throw InputError(path + ": parameter shape mismatch at offset " +
                       std::to_string(block_off));
    for (float& v : p->vec()) v = r.f32();
  }
  return model;
}

}  // namespace convonet
