#pragma once

#include <deque>
#include <functional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "hopattn/mat.hpp"

namespace hopattn {

// Handle into a Tape's node list.
struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

// Reverse-mode tape. A tape is confined to one thread while the graph is
// built and walked; distinct tapes are independent. Node values and grads
// live on the tape; references stay valid as the tape grows.
class Tape {
 public:
  Var input(Mat value);
  Var param(const std::string& name, Mat value);

  Var matmul(Var a, Var b);
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);  // elementwise
  Var scale(Var a, double s);
  // sa*a + sb*b
  Var add_scaled(double sa, Var a, double sb, Var b);
  Var transpose(Var a);
  // a + 1 row^T; row must be 1 x a.cols()
  Var add_row(Var a, Var row);
  // Row-wise softmax; with causal=true entries above the diagonal get zero
  // weight and receive no gradient (a must be square).
  Var softmax_rows(Var a, bool causal = false);
  Var layer_norm_rows(Var a, Var gamma, Var beta);
  Var gelu(Var a);
  Var sum(Var a);  // 1x1
  Var gather_rows(Var table, std::vector<int> ids);
  Var concat_rows(Var a, Var b);
  Var slice_rows(Var a, int first, int count);
  // Mean token cross entropy of row-wise logits against integer targets.
  Var cross_entropy_mean(Var logits, std::vector<int> targets);
  // Value copy that blocks gradient flow.
  Var detach(Var a);

  const Mat& value(Var v) const;
  const Mat& grad(Var v) const;

  // Accumulates d(root)/d(node) into every node's grad. root must be 1x1.
  void backward(Var root);
  void zero_grad();

  std::size_t size() const { return nodes_.size(); }
  const std::vector<std::pair<std::string, Var>>& trainables() const { return trainables_; }

 private:
  struct Node {
    Mat value;
    Mat grad;
    std::function<void(Tape&)> back;  // adds into parent grads
  };

  Var emplace(Mat value, std::function<void(Tape&)> back);
  Node& node(Var v);
  const Node& node(Var v) const;

  std::deque<Node> nodes_;
  std::vector<std::pair<std::string, Var>> trainables_;
};

// Named collection of master parameter values. Names are unique.
class ParamSet {
 public:
  void add(const std::string& name, Mat value);
  Mat& at(const std::string& name);
  const Mat& at(const std::string& name) const;
  bool contains(const std::string& name) const;
  std::size_t total_entries() const;

  std::vector<std::pair<std::string, Mat>>& items() { return items_; }
  const std::vector<std::pair<std::string, Mat>>& items() const { return items_; }

 private:
  std::vector<std::pair<std::string, Mat>> items_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Parameters registered on a tape, keyed by name.
struct BoundParams {
  std::unordered_map<std::string, Var> vars;
  Var at(const std::string& name) const;
};

BoundParams bind_params(Tape& tape, const ParamSet& params);

// Builds a graph over the bound parameters and returns a scalar loss var.
using ScalarFn = std::function<Var(Tape&, const BoundParams&)>;

// Max relative error between reverse-mode and central-finite-difference
// gradients over every parameter entry. Denominator guarded by
// max(|analytic|, |numeric|, 1e-8).
double grad_check(const ScalarFn& f, const ParamSet& params, double step);

}  // namespace hopattn
