#include "conflate/autodiff.hpp"

#include <cmath>
#include <string>

namespace conflate::ad {

namespace {

void same_shape(const Mat& a, const Mat& b, const char* op) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw std::invalid_argument(std::string(op) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                                    std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                                    std::to_string(b.cols()));
}

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

}  // namespace

Var Tape::push(Mat v, bool needs, std::function<void(Tape&, int)> back) {
    nodes_.push_back({std::move(v), Mat(), needs, needs ? std::move(back) : nullptr});
    return {static_cast<int>(nodes_.size()) - 1};
}

Var Tape::constant(Mat v) { return push(std::move(v), false, nullptr); }
Var Tape::param(Mat v) { return push(std::move(v), true, nullptr); }

void Tape::accum(Var v, const Mat& d) {
    auto& n = nodes_[v.id];
    if (!n.needs) return;
    if (n.grad.size() == 0)
        n.grad = d;
    else
        n.grad += d;
}

void Tape::backward(Var out) {
    auto& o = nodes_.at(out.id);
    if (o.value.rows() != 1 || o.value.cols() != 1) throw std::invalid_argument("backward: output must be 1x1");
    for (auto& n : nodes_) n.grad.resize(0, 0);
    if (!o.needs) return;
    o.grad = Mat::Ones(1, 1);
    for (int i = out.id; i >= 0; --i) {
        auto& n = nodes_[i];
        if (n.back && n.grad.size() != 0) n.back(*this, i);
    }
}

Var Tape::matmul(Var a, Var b) {
    const Mat &A = value(a), &B = value(b);
    if (A.cols() != B.rows())
        throw std::invalid_argument("matmul: inner dimensions " + std::to_string(A.cols()) + " and " +
                                    std::to_string(B.rows()));
    return push(A * B, need(a) || need(b), [a, b](Tape& t, int self) {
        const Mat& G = t.g(self);
        if (t.need(a)) t.accum(a, G * t.value(b).transpose());
        if (t.need(b)) t.accum(b, t.value(a).transpose() * G);
    });
}

Var Tape::add(Var a, Var b) {
    same_shape(value(a), value(b), "add");
    return push(value(a) + value(b), need(a) || need(b), [a, b](Tape& t, int self) {
        t.accum(a, t.g(self));
        t.accum(b, t.g(self));
    });
}

Var Tape::sub(Var a, Var b) {
    same_shape(value(a), value(b), "sub");
    return push(value(a) - value(b), need(a) || need(b), [a, b](Tape& t, int self) {
        t.accum(a, t.g(self));
        if (t.need(b)) t.accum(b, -t.g(self));
    });
}

Var Tape::hadamard(Var a, Var b) {
    same_shape(value(a), value(b), "hadamard");
    return push(value(a).cwiseProduct(value(b)), need(a) || need(b), [a, b](Tape& t, int self) {
        const Mat& G = t.g(self);
        if (t.need(a)) t.accum(a, G.cwiseProduct(t.value(b)));
        if (t.need(b)) t.accum(b, G.cwiseProduct(t.value(a)));
    });
}

Var Tape::scale(Var a, double s) {
    return push(value(a) * s, need(a), [a, s](Tape& t, int self) { t.accum(a, t.g(self) * s); });
}

Var Tape::add_scalar(Var a, double s) {
    return push(value(a).array() + s, need(a), [a](Tape& t, int self) { t.accum(a, t.g(self)); });
}

Var Tape::add_row(Var a, Var row) {
    const Mat &A = value(a), &R = value(row);
    if (R.rows() != 1 || R.cols() != A.cols()) throw std::invalid_argument("add_row: bias shape mismatch");
    Mat out = A.rowwise() + R.row(0);
    return push(std::move(out), need(a) || need(row), [a, row](Tape& t, int self) {
        t.accum(a, t.g(self));
        if (t.need(row)) t.accum(row, t.g(self).colwise().sum());
    });
}

Var Tape::mul_col(Var a, Var col) {
    const Mat &A = value(a), &C = value(col);
    if (C.cols() != 1 || C.rows() != A.rows()) throw std::invalid_argument("mul_col: column shape mismatch");
    Mat out = A.array().colwise() * C.col(0).array();
    return push(std::move(out), need(a) || need(col), [a, col](Tape& t, int self) {
        const Mat& G = t.g(self);
        if (t.need(a)) t.accum(a, G.array().colwise() * t.value(col).col(0).array());
        if (t.need(col)) t.accum(col, G.cwiseProduct(t.value(a)).rowwise().sum());
    });
}

Var Tape::relu(Var a) {
    return push(value(a).cwiseMax(0.0), need(a), [a](Tape& t, int self) {
        t.accum(a, (t.value(a).array() > 0).cast<double>() * t.g(self).array());
    });
}

Var Tape::leaky_relu(Var a, double slope) {
    Mat out = value(a).unaryExpr([slope](double x) { return x > 0 ? x : slope * x; });
    return push(std::move(out), need(a), [a, slope](Tape& t, int self) {
        Mat d = t.value(a).unaryExpr([slope](double x) { return x > 0 ? 1.0 : slope; });
        t.accum(a, d.cwiseProduct(t.g(self)));
    });
}

Var Tape::tanh(Var a) {
    Mat out = value(a).array().tanh();
    return push(std::move(out), need(a), [a](Tape& t, int self) {
        const Mat& y = t.value(Var{self});
        t.accum(a, ((1.0 - y.array().square()) * t.g(self).array()).matrix());
    });
}

Var Tape::gelu(Var a) {
    Mat out = value(a).unaryExpr([](double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); });
    return push(std::move(out), need(a), [a](Tape& t, int self) {
        Mat d = t.value(a).unaryExpr([](double x) {
            return 0.5 * (1.0 + std::erf(x * kInvSqrt2)) + x * kInvSqrt2Pi * std::exp(-0.5 * x * x);
        });
        t.accum(a, d.cwiseProduct(t.g(self)));
    });
}

Var Tape::layernorm_rows(Var a, double eps) {
    const Mat& A = value(a);
    const auto n = A.cols();
    Mat y(A.rows(), n);
    Eigen::VectorXd inv_sd(A.rows());
    for (Eigen::Index i = 0; i < A.rows(); ++i) {
        double m = A.row(i).mean();
        double var = (A.row(i).array() - m).square().mean();
        inv_sd(i) = 1.0 / std::sqrt(var + eps);
        y.row(i) = (A.row(i).array() - m) * inv_sd(i);
    }
    return push(std::move(y), need(a), [a, inv_sd](Tape& t, int self) {
        const Mat& Y = t.value(Var{self});
        const Mat& G = t.g(self);
        Mat d(Y.rows(), Y.cols());
        for (Eigen::Index i = 0; i < Y.rows(); ++i) {
            double gm = G.row(i).mean();
            double gy = G.row(i).dot(Y.row(i)) / static_cast<double>(Y.cols());
            d.row(i) = inv_sd(i) * (G.row(i).array() - gm - Y.row(i).array() * gy);
        }
        t.accum(a, d);
    });
}

Var Tape::row_normalize(Var a) {
    const Mat& A = value(a);
    Eigen::VectorXd norms = A.rowwise().norm();
    for (Eigen::Index i = 0; i < norms.size(); ++i)
        if (!(norms(i) > 0)) throw std::domain_error("row_normalize: zero-norm row " + std::to_string(i));
    Mat y = A.array().colwise() / norms.array();
    return push(std::move(y), need(a), [a, norms](Tape& t, int self) {
        const Mat& Y = t.value(Var{self});
        const Mat& G = t.g(self);
        Eigen::VectorXd dots = G.cwiseProduct(Y).rowwise().sum();
        Mat d = G - (Y.array().colwise() * dots.array()).matrix();
        d = d.array().colwise() / norms.array();
        t.accum(a, d);
    });
}

Var Tape::row_l2(Var a) {
    Mat out = value(a).rowwise().norm();
    return push(std::move(out), need(a), [a](Tape& t, int self) {
        const Mat& A = t.value(a);
        const Mat& N = t.value(Var{self});
        const Mat& G = t.g(self);
        Mat d = Mat::Zero(A.rows(), A.cols());
        for (Eigen::Index i = 0; i < A.rows(); ++i)
            if (N(i, 0) > 0) d.row(i) = A.row(i) * (G(i, 0) / N(i, 0));
        t.accum(a, d);
    });
}

Var Tape::row_sum(Var a) {
    Mat out = value(a).rowwise().sum();
    return push(std::move(out), need(a), [a](Tape& t, int self) {
        const Mat& G = t.g(self);
        Mat d = G.col(0).replicate(1, t.value(a).cols());
        t.accum(a, d);
    });
}

Var Tape::sum(Var a) {
    Mat out(1, 1);
    out(0, 0) = value(a).sum();
    return push(std::move(out), need(a), [a](Tape& t, int self) {
        const Mat& A = t.value(a);
        t.accum(a, Mat::Constant(A.rows(), A.cols(), t.g(self)(0, 0)));
    });
}

Var Tape::concat_cols(const std::vector<Var>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_cols: no inputs");
    Eigen::Index rows = value(parts[0]).rows(), cols = 0;
    bool any = false;
    for (auto p : parts) {
        if (value(p).rows() != rows) throw std::invalid_argument("concat_cols: row mismatch");
        cols += value(p).cols();
        any |= need(p);
    }
    Mat out(rows, cols);
    Eigen::Index c = 0;
    for (auto p : parts) {
        out.middleCols(c, value(p).cols()) = value(p);
        c += value(p).cols();
    }
    return push(std::move(out), any, [parts](Tape& t, int self) {
        Eigen::Index c = 0;
        for (auto p : parts) {
            auto w = t.value(p).cols();
            if (t.need(p)) t.accum(p, t.g(self).middleCols(c, w));
            c += w;
        }
    });
}

Var Tape::concat_rows(const std::vector<Var>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_rows: no inputs");
    Eigen::Index cols = value(parts[0]).cols(), rows = 0;
    bool any = false;
    for (auto p : parts) {
        if (value(p).cols() != cols) throw std::invalid_argument("concat_rows: column mismatch");
        rows += value(p).rows();
        any |= need(p);
    }
    Mat out(rows, cols);
    Eigen::Index r = 0;
    for (auto p : parts) {
        out.middleRows(r, value(p).rows()) = value(p);
        r += value(p).rows();
    }
    return push(std::move(out), any, [parts](Tape& t, int self) {
        Eigen::Index r = 0;
        for (auto p : parts) {
            auto h = t.value(p).rows();
            if (t.need(p)) t.accum(p, t.g(self).middleRows(r, h));
            r += h;
        }
    });
}

Var Tape::sparse_mm(const SpMat& s, Var a) {
    if (s.cols() != value(a).rows()) throw std::invalid_argument("sparse_mm: dimension mismatch");
    Mat out = s * value(a);
    return push(std::move(out), need(a), [s, a](Tape& t, int self) { t.accum(a, s.transpose() * t.g(self)); });
}

Var Tape::gather_rows(Var a, const std::vector<int>& idx) {
    const Mat& A = value(a);
    Mat out(static_cast<Eigen::Index>(idx.size()), A.cols());
    for (size_t i = 0; i < idx.size(); ++i) {
        if (idx[i] < 0 || idx[i] >= A.rows()) throw std::out_of_range("gather_rows: index out of range");
        out.row(static_cast<Eigen::Index>(i)) = A.row(idx[i]);
    }
    return push(std::move(out), need(a), [a, idx](Tape& t, int self) {
        const Mat& G = t.g(self);
        Mat d = Mat::Zero(t.value(a).rows(), t.value(a).cols());
        for (size_t i = 0; i < idx.size(); ++i) d.row(idx[i]) += G.row(static_cast<Eigen::Index>(i));
        t.accum(a, d);
    });
}

Var Tape::scatter_add_rows(Var a, const std::vector<int>& idx, int rows) {
    const Mat& A = value(a);
    if (static_cast<Eigen::Index>(idx.size()) != A.rows()) throw std::invalid_argument("scatter_add_rows: index count");
    Mat out = Mat::Zero(rows, A.cols());
    for (size_t i = 0; i < idx.size(); ++i) {
        if (idx[i] < 0 || idx[i] >= rows) throw std::out_of_range("scatter_add_rows: index out of range");
        out.row(idx[i]) += A.row(static_cast<Eigen::Index>(i));
    }
    return push(std::move(out), need(a), [a, idx](Tape& t, int self) {
        const Mat& G = t.g(self);
        Mat d(static_cast<Eigen::Index>(idx.size()), G.cols());
        for (size_t i = 0; i < idx.size(); ++i) d.row(static_cast<Eigen::Index>(i)) = G.row(idx[i]);
        t.accum(a, d);
    });
}

Var Tape::group_softmax(Var a, const std::vector<int>& group, int groups) {
    const Mat& A = value(a);
    if (A.cols() != 1 || static_cast<Eigen::Index>(group.size()) != A.rows())
        throw std::invalid_argument("group_softmax: expects a column with one group id per row");
    std::vector<double> mx(groups, -INFINITY), z(groups, 0.0);
    for (size_t i = 0; i < group.size(); ++i) mx.at(group[i]) = std::max(mx[group[i]], A(i, 0));
    Mat out(A.rows(), 1);
    for (size_t i = 0; i < group.size(); ++i) {
        out(i, 0) = std::exp(A(i, 0) - mx[group[i]]);
        z[group[i]] += out(i, 0);
    }
    for (size_t i = 0; i < group.size(); ++i) out(i, 0) /= z[group[i]];
    return push(std::move(out), need(a), [a, group, groups](Tape& t, int self) {
        const Mat& Y = t.value(Var{self});
        const Mat& G = t.g(self);
        std::vector<double> dot(groups, 0.0);
        for (size_t i = 0; i < group.size(); ++i) dot[group[i]] += G(i, 0) * Y(i, 0);
        Mat d(Y.rows(), 1);
        for (size_t i = 0; i < group.size(); ++i) d(i, 0) = Y(i, 0) * (G(i, 0) - dot[group[i]]);
        t.accum(a, d);
    });
}

}  // namespace conflate::ad
