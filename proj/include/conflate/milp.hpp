#pragma once

#include <cstddef>
#include <limits>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace conflate {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Affine expression sum(coef * var) + constant over model variable indices.
struct LinExpr {
    std::map<int, double> terms;
    double constant = 0.0;

    LinExpr() = default;
    LinExpr(double c) : constant(c) {}
    static LinExpr var(int v, double coef = 1.0);

    LinExpr& operator+=(const LinExpr& o);
    LinExpr& operator-=(const LinExpr& o);
    LinExpr& operator*=(double s);
    double eval(const std::vector<double>& x) const;
};

LinExpr operator+(LinExpr a, const LinExpr& b);
LinExpr operator-(LinExpr a, const LinExpr& b);
LinExpr operator*(double s, LinExpr a);

enum class Cmp { GE, GT, LE, LT };

// expr (op) 0
struct Comparison {
    LinExpr expr;
    Cmp op;
};

bool holds(const Comparison& c, const std::vector<double>& x);

enum class Sense { LE, GE, EQ };

struct Constraint {
    std::vector<std::pair<int, double>> terms;
    Sense sense;
    double rhs;
    int group = -1;  // caller tag, e.g. the pair that emitted it
};

struct Variable {
    std::string name;
    double lo = 0.0, hi = kInf;
    bool binary = false;
};

struct MilpModel {
    std::vector<Variable> vars;
    std::vector<Constraint> cons;
    std::vector<double> cost;
    double big_M = 1e4;
    double strict_slack = 1e-6;
    int group = -1;  // tag stamped on constraints added from now on

    int add_continuous(const std::string& name, double lo, double hi, double cost_coef = 0.0);
    int add_binary(const std::string& name);
    // expr (sense) 0
    void add(const LinExpr& e, Sense s);

    size_t num_binaries() const;
    double objective(const std::vector<double>& x) const;
    bool feasible(const std::vector<double>& x, double tol) const;
    // interval of expr over the variable bounds
    std::pair<double, double> range(const LinExpr& e) const;
    std::string to_lp() const;
};

// if (all cond) then (c1 or c2). Emits the indicator pattern with binaries u_i, w, t and returns them.
std::vector<int> encode_implication(MilpModel& m, const std::vector<Comparison>& cond, const Comparison& c1,
                                    const Comparison& c2);
// if (all cond) then p * q >= 0.
std::vector<int> encode_product_implication(MilpModel& m, const std::vector<Comparison>& cond, const LinExpr& p,
                                            const LinExpr& q);

enum class SolveStatus { Optimal, Infeasible, NodeLimit };
const char* status_name(SolveStatus s);

struct LpResult {
    SolveStatus status = SolveStatus::Infeasible;
    double objective = 0.0;
    std::vector<double> x;
    int iterations = 0;
};

// Bounded-variable two-phase primal simplex; lo/hi override the model's bounds.
LpResult solve_lp(const MilpModel& m, const std::vector<double>& lo, const std::vector<double>& hi);

struct MilpOptions {
    double integer_tol = 1e-5;
    double lp_tol = 1e-6;
    long max_nodes = 500000;
    bool decompose = true;
};

struct MilpResult {
    SolveStatus status = SolveStatus::Infeasible;
    double objective = 0.0;
    std::vector<double> x;
    long nodes = 0;
    std::vector<int> infeasible_groups;  // constraint groups of components without a solution
};

MilpResult solve_milp(const MilpModel& m, const MilpOptions& opt = {});

}  // namespace conflate
