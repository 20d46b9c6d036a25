#include "mva/tensor.hpp"

#include <sstream>
#include <stdexcept>
#include <utility>

namespace mva {

std::string shape_str(const std::vector<int>& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::int64_t shape_size(const std::vector<int>& shape) {
  std::int64_t n = 1;
  for (int e : shape) n *= e;
  return n;
}

Tensor::Tensor() : data(std::make_shared<std::vector<double>>(1, 0.0)) { shape = {}; }

Tensor Tensor::zeros(std::vector<int> shape, bool requires_grad) {
  for (int e : shape) {
    if (e <= 0) throw std::invalid_argument("tensor extents must be positive, got " + shape_str(shape));
  }
  Tensor t;
  t.shape = std::move(shape);
  t.data = std::make_shared<std::vector<double>>(static_cast<std::size_t>(shape_size(t.shape)), 0.0);
  t.requires_grad = requires_grad;
  return t;
}

Tensor Tensor::full(std::vector<int> shape, double value, bool requires_grad) {
  Tensor t = zeros(std::move(shape), requires_grad);
  for (double& x : *t.data) x = value;
  return t;
}

Tensor Tensor::from(std::vector<int> shape, std::vector<double> values, bool requires_grad) {
  Tensor t = zeros(std::move(shape), requires_grad);
  if (static_cast<std::int64_t>(values.size()) != t.size()) {
    throw std::invalid_argument("value count " + std::to_string(values.size()) +
                                " does not match shape " + shape_str(t.shape));
  }
  *t.data = std::move(values);
  return t;
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  Tensor t;
  t.shape = {};
  t.data = std::make_shared<std::vector<double>>(1, value);
  t.requires_grad = requires_grad;
  return t;
}

std::int64_t Tensor::rows() const { return rank() == 0 ? 1 : size() / cols(); }

std::int64_t Tensor::cols() const { return rank() == 0 ? 1 : shape.back(); }

double Tensor::item() const {
  if (size() != 1) throw std::invalid_argument("item() requires a single-element tensor, got " + shape_str(shape));
  return (*data)[0];
}

Tensor Tensor::clone() const {
  Tensor t;
  t.shape = shape;
  t.data = std::make_shared<std::vector<double>>(*data);
  t.requires_grad = requires_grad;
  return t;
}

namespace {
thread_local GradGraph* g_active_graph = nullptr;
std::uint64_t next_serial() {
  static std::uint64_t counter = 0;
  return ++counter;
}
}  // namespace

GradGraph::GradGraph() : serial_(next_serial()) {}

GradGraph::Scope::Scope(GradGraph& g) : prev_(g_active_graph) { g_active_graph = &g; }
GradGraph::Scope::~Scope() { g_active_graph = prev_; }
GradGraph* GradGraph::active() { return g_active_graph; }

std::int64_t GradGraph::add_node(const char* op, std::int64_t out_size, BackwardFn backward) {
  nodes_.push_back(Node{op, out_size, std::move(backward)});
  grads_.emplace_back(nullptr);
  return static_cast<std::int64_t>(nodes_.size()) - 1;
}

std::int64_t GradGraph::leaf_id(const Tensor& t) {
  const void* key = t.data.get();
  auto it = leaves_.find(key);
  if (it != leaves_.end()) return it->second;
  std::int64_t id = add_node("leaf", t.size(), nullptr);
  leaves_.emplace(key, id);
  return id;
}

std::int64_t GradGraph::input_id(const Tensor& t) {
  if (t.graph_serial == serial_ && t.node >= 0) return t.node;
  if (t.requires_grad) return leaf_id(t);
  return -1;
}

void GradGraph::tag_output(Tensor& t, std::int64_t node) const {
  t.node = node;
  t.graph_serial = serial_;
  t.requires_grad = true;
}

void GradGraph::accumulate(std::int64_t node, const std::vector<double>& g) {
  if (node < 0) return;
  auto& slot = grads_[static_cast<std::size_t>(node)];
  if (!slot) {
    slot = std::make_unique<std::vector<double>>(
        static_cast<std::size_t>(nodes_[static_cast<std::size_t>(node)].out_size), 0.0);
  }
  if (slot->size() != g.size()) {
    throw std::invalid_argument("gradient size mismatch on node " + std::to_string(node));
  }
  for (std::size_t i = 0; i < g.size(); ++i) (*slot)[i] += g[i];
}

void GradGraph::backward(const Tensor& loss) {
  if (loss.size() != 1) {
    throw std::invalid_argument("backward() requires a scalar loss, got " + shape_str(loss.shape));
  }
  if (loss.graph_serial != serial_ || loss.node < 0) {
    throw std::invalid_argument("backward() loss is not tracked by this graph");
  }
  accumulate(loss.node, {1.0});
  for (std::int64_t id = loss.node; id >= 0; --id) {
    const auto& slot = grads_[static_cast<std::size_t>(id)];
    const Node& n = nodes_[static_cast<std::size_t>(id)];
    if (slot && n.backward) n.backward(*this, *slot);
  }
}

bool GradGraph::has_grad(const Tensor& t) const {
  std::int64_t id = -1;
  if (t.graph_serial == serial_ && t.node >= 0) {
    id = t.node;
  } else {
    auto it = leaves_.find(t.data.get());
    if (it == leaves_.end()) return false;
    id = it->second;
  }
  return grads_[static_cast<std::size_t>(id)] != nullptr;
}

Tensor GradGraph::grad(const Tensor& t) const {
  std::int64_t id = -1;
  if (t.graph_serial == serial_ && t.node >= 0) {
    id = t.node;
  } else {
    auto it = leaves_.find(t.data.get());
    if (it != leaves_.end()) id = it->second;
  }
  if (id < 0 || !grads_[static_cast<std::size_t>(id)]) {
    throw std::invalid_argument("no gradient recorded for tensor " + shape_str(t.shape));
  }
  Tensor g;
  g.shape = t.shape;
  g.data = std::make_shared<std::vector<double>>(*grads_[static_cast<std::size_t>(id)]);
  return g;
}

std::unordered_map<std::string, Tensor> collect_gradients(
    const GradGraph& g, const std::vector<std::pair<std::string, Tensor>>& params) {
  std::unordered_map<std::string, Tensor> out;
  for (const auto& [name, t] : params) {
    if (g.has_grad(t)) out.emplace(name, g.grad(t));
  }
  return out;
}

}  // namespace mva
