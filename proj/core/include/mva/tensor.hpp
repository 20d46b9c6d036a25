#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

namespace mva {

std::string shape_str(const std::vector<int>& shape);
std::int64_t shape_size(const std::vector<int>& shape);

/// Dense row-major tensor of 64-bit floats. Copies are shallow: they share
/// the underlying buffer, which is what lets a parameter tensor held by a
/// model and the same tensor seen by the optimizer stay in sync.
struct Tensor {
  std::vector<int> shape;
  std::shared_ptr<std::vector<double>> data;
  bool requires_grad = false;

  // Graph handle. Valid only for the graph whose serial matches; leaves keep
  // node == -1 and are identified inside the graph by their buffer address.
  std::int64_t node = -1;
  std::uint64_t graph_serial = 0;

  Tensor();
  static Tensor zeros(std::vector<int> shape, bool requires_grad = false);
  static Tensor full(std::vector<int> shape, double value, bool requires_grad = false);
  static Tensor from(std::vector<int> shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  std::int64_t size() const { return shape_size(shape); }
  int rank() const { return static_cast<int>(shape.size()); }
  /// Number of rows when viewed as a 2-D array over the last axis.
  std::int64_t rows() const;
  /// Extent of the last axis (1 for rank-0).
  std::int64_t cols() const;

  double* ptr() { return data->data(); }
  const double* ptr() const { return data->data(); }
  double item() const;

  /// Deep copy, detached from any graph.
  Tensor clone() const;
  bool same_buffer(const Tensor& other) const { return data.get() == other.data.get(); }
};

/// Reverse-mode tape. Nodes are appended during the forward pass and visited
/// exactly once in reverse insertion order during backward(). Tensors with
/// requires_grad == false never get a node, so no gradient storage ever
/// exists for frozen values.
class GradGraph {
 public:
  using BackwardFn = std::function<void(GradGraph&, const std::vector<double>&)>;

  GradGraph();
  GradGraph(const GradGraph&) = delete;
  GradGraph& operator=(const GradGraph&) = delete;

  /// Binds a graph as the recording target for ops on this thread.
  class Scope {
   public:
    explicit Scope(GradGraph& g);
    ~Scope();
    Scope(const Scope&) = delete;
    Scope& operator=(const Scope&) = delete;

   private:
    GradGraph* prev_;
  };
  static GradGraph* active();

  std::int64_t add_node(const char* op, std::int64_t out_size, BackwardFn backward);
  /// Node id for a tensor used as an op input: the producing node for
  /// intermediates of this graph, a (lazily created) leaf for tunable
  /// parameters, -1 for frozen/constant values.
  std::int64_t input_id(const Tensor& t);
  /// Marks an op output as produced by `node`.
  void tag_output(Tensor& t, std::int64_t node) const;

  /// Seeds d(loss)/d(loss) = 1 and propagates. Loss must be a scalar tracked
  /// by this graph.
  void backward(const Tensor& loss);

  bool has_grad(const Tensor& t) const;
  /// Gradient of a tracked tensor after backward(), as a detached tensor.
  Tensor grad(const Tensor& t) const;
  /// Accumulates `g` into the gradient buffer of `node`. No-op for node < 0.
  void accumulate(std::int64_t node, const std::vector<double>& g);

  std::uint64_t serial() const { return serial_; }
  std::size_t num_nodes() const { return nodes_.size(); }
  const char* node_op(std::int64_t node) const { return nodes_[static_cast<std::size_t>(node)].op; }

 private:
  struct Node {
    const char* op;
    std::int64_t out_size;
    BackwardFn backward;  // empty for leaves
  };

  std::int64_t leaf_id(const Tensor& t);

  std::uint64_t serial_;
  std::vector<Node> nodes_;
  std::vector<std::unique_ptr<std::vector<double>>> grads_;
  std::unordered_map<const void*, std::int64_t> leaves_;
};

/// Collects gradients for named parameters. Parameters without a gradient
/// (frozen, or simply unused by the recorded loss) are absent from the map.
std::unordered_map<std::string, Tensor> collect_gradients(
    const GradGraph& g, const std::vector<std::pair<std::string, Tensor>>& params);

}  // namespace mva
