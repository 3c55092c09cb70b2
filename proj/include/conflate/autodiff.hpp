#pragma once

// Reverse-mode differentiation over dense float64 matrices.
// A Tape records every op of one forward pass; backward() replays it in reverse.

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <functional>
#include <stdexcept>
#include <vector>

namespace conflate::ad {

using Mat = Eigen::MatrixXd;
using SpMat = Eigen::SparseMatrix<double, Eigen::RowMajor>;

struct Var {
    int id = -1;
    bool valid() const { return id >= 0; }
};

class Tape {
public:
    Var constant(Mat v);
    Var param(Mat v);

    const Mat& value(Var v) const { return nodes_.at(v.id).value; }
    const Mat& grad(Var v) const { return nodes_.at(v.id).grad; }
    bool needs_grad(Var v) const { return nodes_.at(v.id).needs; }
    size_t size() const { return nodes_.size(); }

    // seeds d(out)/d(out) = 1; out must be 1x1
    void backward(Var out);

    Var matmul(Var a, Var b);
    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var hadamard(Var a, Var b);
    Var scale(Var a, double s);
    Var add_scalar(Var a, double s);
    Var add_row(Var a, Var row);   // row is 1 x cols, broadcast down
    Var mul_col(Var a, Var col);   // col is rows x 1, broadcast across

    Var relu(Var a);
    Var leaky_relu(Var a, double slope);
    Var tanh(Var a);
    Var gelu(Var a);

    Var layernorm_rows(Var a, double eps = 1e-5);
    Var row_normalize(Var a);  // throws on a zero row
    Var row_l2(Var a);         // rows x 1; gradient taken as 0 at the origin
    Var row_sum(Var a);        // rows x 1
    Var sum(Var a);            // 1 x 1

    Var concat_cols(const std::vector<Var>& parts);
    Var concat_rows(const std::vector<Var>& parts);
    Var sparse_mm(const SpMat& s, Var a);
    Var gather_rows(Var a, const std::vector<int>& idx);
    Var scatter_add_rows(Var a, const std::vector<int>& idx, int rows);
    // softmax within each group of a column vector, group[i] in [0, groups)
    Var group_softmax(Var a, const std::vector<int>& group, int groups);

private:
    struct Node {
        Mat value;
        Mat grad;
        bool needs = false;
        std::function<void(Tape&, int)> back;
    };
    Var push(Mat v, bool needs, std::function<void(Tape&, int)> back);
    Mat& g(int id) { return nodes_[id].grad; }
    bool need(Var v) const { return nodes_[v.id].needs; }
    void accum(Var v, const Mat& d);

    std::vector<Node> nodes_;
};

}  // namespace conflate::ad
