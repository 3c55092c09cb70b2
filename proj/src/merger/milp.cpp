#include "conflate/milp.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <queue>
#include <set>
#include <sstream>
#include <stdexcept>

namespace conflate {

LinExpr LinExpr::var(int v, double coef) {
    LinExpr e;
    e.terms[v] = coef;
    return e;
}

LinExpr& LinExpr::operator+=(const LinExpr& o) {
    for (auto [v, c] : o.terms) terms[v] += c;
    constant += o.constant;
    return *this;
}

LinExpr& LinExpr::operator-=(const LinExpr& o) {
    for (auto [v, c] : o.terms) terms[v] -= c;
    constant -= o.constant;
    return *this;
}

LinExpr& LinExpr::operator*=(double s) {
    for (auto& [v, c] : terms) c *= s;
    constant *= s;
    return *this;
}

double LinExpr::eval(const std::vector<double>& x) const {
    double s = constant;
    for (auto [v, c] : terms) s += c * x.at(v);
    return s;
}

LinExpr operator+(LinExpr a, const LinExpr& b) { return a += b; }
LinExpr operator-(LinExpr a, const LinExpr& b) { return a -= b; }
LinExpr operator*(double s, LinExpr a) { return a *= s; }

bool holds(const Comparison& c, const std::vector<double>& x) {
    double v = c.expr.eval(x);
    switch (c.op) {
        case Cmp::GE: return v >= 0;
        case Cmp::GT: return v > 0;
        case Cmp::LE: return v <= 0;
        case Cmp::LT: return v < 0;
    }
    return false;
}

int MilpModel::add_continuous(const std::string& name, double lo, double hi, double cost_coef) {
    if (lo > hi) throw std::invalid_argument("variable " + name + ": lo > hi");
    vars.push_back({name, lo, hi, false});
    cost.push_back(cost_coef);
    return static_cast<int>(vars.size()) - 1;
}

int MilpModel::add_binary(const std::string& name) {
    vars.push_back({name, 0.0, 1.0, true});
    cost.push_back(0.0);
    return static_cast<int>(vars.size()) - 1;
}

void MilpModel::add(const LinExpr& e, Sense s) {
    Constraint c{{}, s, -e.constant, group};
    for (auto [v, coef] : e.terms) {
        if (v < 0 || v >= static_cast<int>(vars.size())) throw std::out_of_range("constraint references unknown variable");
        if (coef != 0.0) c.terms.push_back({v, coef});
    }
    cons.push_back(std::move(c));
}

size_t MilpModel::num_binaries() const {
    return std::count_if(vars.begin(), vars.end(), [](const Variable& v) { return v.binary; });
}

double MilpModel::objective(const std::vector<double>& x) const {
    double s = 0;
    for (size_t j = 0; j < cost.size(); ++j) s += cost[j] * x.at(j);
    return s;
}

bool MilpModel::feasible(const std::vector<double>& x, double tol) const {
    if (x.size() != vars.size()) return false;
    for (size_t j = 0; j < vars.size(); ++j) {
        if (x[j] < vars[j].lo - tol || x[j] > vars[j].hi + tol) return false;
        if (vars[j].binary && std::abs(x[j] - std::round(x[j])) > tol) return false;
    }
    for (const auto& c : cons) {
        double lhs = 0;
        for (auto [v, a] : c.terms) lhs += a * x[v];
        if (c.sense != Sense::GE && lhs > c.rhs + tol) return false;
        if (c.sense != Sense::LE && lhs < c.rhs - tol) return false;
    }
    return true;
}

std::pair<double, double> MilpModel::range(const LinExpr& e) const {
    double lo = e.constant, hi = e.constant;
    for (auto [v, c] : e.terms) {
        if (c == 0) continue;
        double a = c * vars.at(v).lo, b = c * vars.at(v).hi;
        lo += std::min(a, b);
        hi += std::max(a, b);
    }
    return {lo, hi};
}

std::string MilpModel::to_lp() const {
    std::ostringstream os;
    os.precision(17);
    auto term = [&](double a, int v, bool first) {
        if (a < 0) os << (first ? "-" : " - ") << -a;
        else os << (first ? "" : " + ") << a;
        os << " x" << v;
    };
    os << "\\ variables\n";
    for (size_t j = 0; j < vars.size(); ++j) os << "\\ x" << j << " " << vars[j].name << "\n";
    os << "Minimize\n obj:";
    bool first = true;
    for (size_t j = 0; j < cost.size(); ++j)
        if (cost[j] != 0) {
            os << ' ';
            term(cost[j], static_cast<int>(j), first);
            first = false;
        }
    if (first) os << " 0 x0";
    os << "\nSubject To\n";
    for (size_t i = 0; i < cons.size(); ++i) {
        os << " c" << i << ":";
        bool f = true;
        for (auto [v, a] : cons[i].terms) {
            os << ' ';
            term(a, v, f);
            f = false;
        }
        if (f) os << " 0 x0";
        os << (cons[i].sense == Sense::LE ? " <= " : cons[i].sense == Sense::GE ? " >= " : " = ") << cons[i].rhs << "\n";
    }
    os << "Bounds\n";
    for (size_t j = 0; j < vars.size(); ++j) {
        if (vars[j].binary) continue;
        os << ' ';
        if (std::isinf(vars[j].lo)) os << "-inf";
        else os << vars[j].lo;
        os << " <= x" << j << " <= ";
        if (std::isinf(vars[j].hi)) os << "+inf";
        else os << vars[j].hi;
        os << "\n";
    }
    os << "Binaries\n";
    for (size_t j = 0; j < vars.size(); ++j)
        if (vars[j].binary) os << " x" << j << "\n";
    os << "End\n";
    return os.str();
}

namespace {

// u = 1 exactly when (e op 0) holds, up to the strict slack
void indicator(MilpModel& m, const Comparison& c, int u) {
    const double M = m.big_M, s = m.strict_slack;
    const LinExpr& e = c.expr;
    LinExpr U = LinExpr::var(u), notU = LinExpr(1.0) - U;
    switch (c.op) {
        case Cmp::GE:
            m.add(e + M * notU, Sense::GE);
            m.add(e + LinExpr(s) - M * U, Sense::LE);
            break;
        case Cmp::GT:
            m.add(e - LinExpr(s) + M * notU, Sense::GE);
            m.add(e - M * U, Sense::LE);
            break;
        case Cmp::LE:
            m.add(e - M * notU, Sense::LE);
            m.add(e - LinExpr(s) + M * U, Sense::GE);
            break;
        case Cmp::LT:
            m.add(e + LinExpr(s) - M * notU, Sense::LE);
            m.add(e + M * U, Sense::GE);
            break;
    }
}

// (e op 0) must hold unless one of the switches is 1
void enforce(MilpModel& m, const Comparison& c, const LinExpr& switches) {
    const double M = m.big_M, s = m.strict_slack;
    switch (c.op) {
        case Cmp::GE: m.add(c.expr + M * switches, Sense::GE); break;
        case Cmp::GT: m.add(c.expr - LinExpr(s) + M * switches, Sense::GE); break;
        case Cmp::LE: m.add(c.expr - M * switches, Sense::LE); break;
        case Cmp::LT: m.add(c.expr + LinExpr(s) - M * switches, Sense::LE); break;
    }
}

int condition_binary(MilpModel& m, const std::vector<Comparison>& cond, std::vector<int>& out) {
    if (cond.empty()) throw std::invalid_argument("implication needs at least one condition");
    LinExpr sum;
    for (const auto& c : cond) {
        int u = m.add_binary("u");
        indicator(m, c, u);
        sum += LinExpr::var(u);
        out.push_back(u);
    }
    int t = m.add_binary("t");
    double n = static_cast<double>(cond.size());
    m.add(sum - n * LinExpr::var(t), Sense::GE);
    m.add(sum - n * LinExpr::var(t) - LinExpr(n - 1), Sense::LE);
    return t;
}

}  // namespace

std::vector<int> encode_implication(MilpModel& m, const std::vector<Comparison>& cond, const Comparison& c1,
                                    const Comparison& c2) {
    std::vector<int> bins;
    int t = condition_binary(m, cond, bins);
    int w = m.add_binary("w");
    LinExpr off = LinExpr(1.0) - LinExpr::var(t);
    enforce(m, c1, off + (LinExpr(1.0) - LinExpr::var(w)));
    enforce(m, c2, off + LinExpr::var(w));
    bins.push_back(w);
    bins.push_back(t);
    return bins;
}

std::vector<int> encode_product_implication(MilpModel& m, const std::vector<Comparison>& cond, const LinExpr& p,
                                            const LinExpr& q) {
    std::vector<int> bins;
    int t = condition_binary(m, cond, bins);
    int w = m.add_binary("w");
    LinExpr off = LinExpr(1.0) - LinExpr::var(t);
    LinExpr W = LinExpr::var(w);
    const double M = m.big_M;
    for (const LinExpr* f : {&p, &q}) {
        m.add(*f + M * (W + off), Sense::GE);                   // w = 0: factor >= 0
        m.add(*f - M * ((LinExpr(1.0) - W) + off), Sense::LE);  // w = 1: factor <= 0
    }
    bins.push_back(w);
    bins.push_back(t);
    return bins;
}

const char* status_name(SolveStatus s) {
    switch (s) {
        case SolveStatus::Optimal: return "optimal";
        case SolveStatus::Infeasible: return "infeasible";
        case SolveStatus::NodeLimit: return "node_limit";
    }
    return "?";
}

namespace {

// Dense tableau for min c.x, A x = b, 0 <= x <= ub, starting from a feasible basis.
struct Simplex {
    int rows = 0, cols = 0;
    std::vector<double> T;  // rows x cols, row-major, equals B^-1 A
    std::vector<double> beta, ub, c;
    std::vector<int> basis, state;  // state: 0 basic, 1 at lower, 2 at upper
    int iterations = 0;

    double& at(int i, int j) { return T[static_cast<size_t>(i) * cols + j]; }

    void reprice(std::vector<double>& d) const {
        for (int j = 0; j < cols; ++j) d[j] = c[j];
        for (int i = 0; i < rows; ++i) {
            double cb = c[basis[i]];
            if (cb == 0) continue;
            const double* ri = &T[static_cast<size_t>(i) * cols];
            for (int j = 0; j < cols; ++j) d[j] -= cb * ri[j];
        }
    }

    // false when unbounded or out of iterations
    bool run(int max_iter) {
        const double dtol = 1e-9, ptol = 1e-9;
        const int bland_after = 20 * (rows + cols) + 200;
        std::vector<double> d(cols);
        std::vector<int> nz;
        reprice(d);
        for (int it = 0; it < max_iter; ++it, ++iterations) {
            if (it % 64 == 63) reprice(d);
            bool bland = it > bland_after;
            int enter = -1;
            double best = 0;
            for (int j = 0; j < cols; ++j) {
                if (state[j] == 0 || ub[j] <= 0) continue;
                double score = state[j] == 1 ? -d[j] : d[j];
                if (score > dtol && (enter < 0 || (!bland && score > best))) {
                    enter = j;
                    best = score;
                    if (bland) break;
                }
            }
            if (enter < 0) {
                // confirm with fresh reduced costs before declaring optimality
                reprice(d);
                bool done = true;
                for (int j = 0; j < cols && done; ++j)
                    if (state[j] != 0 && ub[j] > 0 && (state[j] == 1 ? -d[j] : d[j]) > dtol) done = false;
                if (done) return true;
                continue;
            }
            const double dir = state[enter] == 1 ? 1.0 : -1.0;
            double theta = ub[enter];
            int leave = -1;
            bool leave_up = false;
            double leave_piv = 0;
            for (int i = 0; i < rows; ++i) {
                double a = dir * at(i, enter);
                double lim;
                bool up;
                if (a > ptol) {
                    lim = std::max(0.0, beta[i]) / a;
                    up = false;
                } else if (a < -ptol && std::isfinite(ub[basis[i]])) {
                    lim = std::max(0.0, ub[basis[i]] - beta[i]) / -a;
                    up = true;
                } else {
                    continue;
                }
                bool take;
                if (lim < theta - 1e-12) take = true;
                else if (lim <= theta + 1e-12 && leave >= 0)
                    take = bland ? basis[i] < basis[leave] : std::abs(a) > leave_piv;
                else take = false;
                if (take) {
                    theta = lim;
                    leave = i;
                    leave_up = up;
                    leave_piv = std::abs(a);
                }
            }
            if (!std::isfinite(theta)) return false;
            for (int i = 0; i < rows; ++i) beta[i] -= dir * theta * at(i, enter);
            if (leave < 0) {
                state[enter] = state[enter] == 1 ? 2 : 1;
                continue;
            }
            double entering_value = state[enter] == 1 ? theta : ub[enter] - theta;
            int old = basis[leave];
            state[old] = leave_up ? 2 : 1;
            basis[leave] = enter;
            state[enter] = 0;
            beta[leave] = entering_value;
            double piv = at(leave, enter);
            double* pr = &T[static_cast<size_t>(leave) * cols];
            nz.clear();
            for (int j = 0; j < cols; ++j)
                if (pr[j] != 0) {
                    pr[j] /= piv;
                    nz.push_back(j);
                }
            for (int i = 0; i < rows; ++i) {
                if (i == leave) continue;
                double f = at(i, enter);
                if (f == 0) continue;
                double* ri = &T[static_cast<size_t>(i) * cols];
                for (int j : nz) ri[j] -= f * pr[j];
                ri[enter] = 0;
            }
            double dq = d[enter];
            for (int j : nz) d[j] -= dq * pr[j];
            d[enter] = 0;
        }
        return false;
    }

    double value(int j) const {
        if (state[j] == 1) return 0;
        if (state[j] == 2) return ub[j];
        for (int i = 0; i < rows; ++i)
            if (basis[i] == j) return beta[i];
        return 0;
    }
};

}  // namespace

LpResult solve_lp(const MilpModel& m, const std::vector<double>& lo, const std::vector<double>& hi) {
    const int n = static_cast<int>(m.vars.size());
    const int r = static_cast<int>(m.cons.size());
    LpResult res;
    for (int j = 0; j < n; ++j) {
        if (lo[j] > hi[j] + 1e-12) return res;
        if (!std::isfinite(lo[j])) throw std::invalid_argument("solve_lp: variables need a finite lower bound");
    }
    int slacks = 0;
    for (auto& c : m.cons) slacks += c.sense != Sense::EQ;
    // rows needing an artificial are known only after sign normalization
    std::vector<double> b(r);
    std::vector<double> sgn(r, 1.0);
    std::vector<int> slack_col(r, -1);
    int col = n;
    for (int i = 0; i < r; ++i) {
        double bi = m.cons[i].rhs;
        for (auto [v, a] : m.cons[i].terms) bi -= a * lo[v];
        if (m.cons[i].sense != Sense::EQ) slack_col[i] = col++;
        if (bi < 0) sgn[i] = -1.0;
        b[i] = sgn[i] * bi;
    }
    std::vector<int> art_col(r, -1);
    for (int i = 0; i < r; ++i) {
        double slack_coef = m.cons[i].sense == Sense::LE ? 1.0 : m.cons[i].sense == Sense::GE ? -1.0 : 0.0;
        if (slack_coef * sgn[i] <= 0) art_col[i] = col++;
    }
    Simplex sx;
    sx.rows = r;
    sx.cols = col;
    sx.T.assign(static_cast<size_t>(r) * col, 0.0);
    sx.ub.assign(col, kInf);
    sx.beta = b;
    sx.basis.assign(r, -1);
    sx.state.assign(col, 1);
    for (int j = 0; j < n; ++j) sx.ub[j] = hi[j] - lo[j];
    for (int i = 0; i < r; ++i) {
        for (auto [v, a] : m.cons[i].terms) sx.at(i, v) += sgn[i] * a;
        if (slack_col[i] >= 0) sx.at(i, slack_col[i]) = sgn[i] * (m.cons[i].sense == Sense::LE ? 1.0 : -1.0);
        if (art_col[i] >= 0) {
            sx.at(i, art_col[i]) = 1.0;
            sx.basis[i] = art_col[i];
        } else {
            sx.basis[i] = slack_col[i];
        }
        sx.state[sx.basis[i]] = 0;
    }
    const int max_iter = 50000 + 50 * (r + col);
    bool any_art = std::any_of(art_col.begin(), art_col.end(), [](int c) { return c >= 0; });
    if (any_art) {
        sx.c.assign(col, 0.0);
        for (int i = 0; i < r; ++i)
            if (art_col[i] >= 0) sx.c[art_col[i]] = 1.0;
        if (!sx.run(max_iter)) throw std::runtime_error("solve_lp: phase 1 did not terminate");
        double infeas = 0;
        for (int i = 0; i < r; ++i)
            if (sx.c[sx.basis[i]] > 0) infeas += std::max(0.0, sx.beta[i]);
        if (infeas > 1e-9) {
            res.iterations = sx.iterations;
            return res;
        }
        for (int i = 0; i < r; ++i)
            if (art_col[i] >= 0) sx.ub[art_col[i]] = 0.0;
    }
    sx.c.assign(col, 0.0);
    for (int j = 0; j < n; ++j) sx.c[j] = m.cost[j];
    if (!sx.run(max_iter)) throw std::runtime_error("solve_lp: unbounded or did not terminate");
    res.status = SolveStatus::Optimal;
    res.iterations = sx.iterations;
    res.x.resize(n);
    for (int j = 0; j < n; ++j) res.x[j] = std::clamp(lo[j] + sx.value(j), lo[j], hi[j]);
    res.objective = m.objective(res.x);
    return res;
}

namespace {

struct Node {
    double bound;
    int depth;
    long id;
    std::vector<double> lo, hi, x;
    bool fine = false;  // looked integral but its pinned re-solve lost objective
};

struct NodeOrder {
    bool operator()(const Node& a, const Node& b) const {
        if (a.bound != b.bound) return a.bound > b.bound;
        if (a.depth != b.depth) return a.depth < b.depth;
        return a.id > b.id;
    }
};

MilpResult branch_and_bound(const MilpModel& m, const MilpOptions& opt) {
    const int n = static_cast<int>(m.vars.size());
    std::vector<double> lo(n), hi(n);
    for (int j = 0; j < n; ++j) lo[j] = m.vars[j].lo, hi[j] = m.vars[j].hi;
    MilpResult out;
    double incumbent = kInf;
    std::vector<double> best_x;
    std::priority_queue<Node, std::vector<Node>, NodeOrder> open;
    long next_id = 0;

    auto branch_var = [&](const std::vector<double>& x, double tol) {
        int pick = -1;
        double frac_best = 0;
        for (int j = 0; j < n; ++j) {
            if (!m.vars[j].binary) continue;
            double f = std::abs(x[j] - std::round(x[j]));
            if (f > tol && f > frac_best + 1e-15) pick = j, frac_best = f;
        }
        return pick;
    };
    // integral relaxations are re-solved with binaries pinned before they count
    auto polish = [&](const std::vector<double>& x, std::vector<double> l, std::vector<double> h) {
        for (int j = 0; j < n; ++j)
            if (m.vars[j].binary) l[j] = h[j] = std::round(x[j]);
        auto r = solve_lp(m, l, h);
        if (r.status == SolveStatus::Optimal)
            for (int j = 0; j < n; ++j)
                if (m.vars[j].binary) r.x[j] = l[j];
        return r;
    };
    auto consider = [&](std::vector<double> l, std::vector<double> h, int depth) {
        ++out.nodes;
        auto lp = solve_lp(m, l, h);
        if (lp.status != SolveStatus::Optimal) return;
        if (lp.objective >= incumbent - opt.lp_tol) return;
        bool fine = false;
        if (branch_var(lp.x, opt.integer_tol) < 0) {
            auto p = polish(lp.x, l, h);
            if (p.status == SolveStatus::Optimal && p.objective < incumbent) {
                incumbent = p.objective;
                best_x = p.x;
            }
            // big-M terms can hide real cost inside binaries that are off by less than the tolerance
            bool lost = p.status != SolveStatus::Optimal || p.objective > lp.objective + opt.lp_tol;
            if (!lost || branch_var(lp.x, 1e-12) < 0) return;
            fine = true;
        }
        open.push({lp.objective, depth, next_id++, std::move(l), std::move(h), std::move(lp.x), fine});
    };

    consider(lo, hi, 0);
    while (!open.empty()) {
        if (out.nodes >= opt.max_nodes) break;
        Node nd = open.top();
        open.pop();
        if (nd.bound >= incumbent - opt.lp_tol) continue;
        int j = branch_var(nd.x, nd.fine ? 1e-12 : opt.integer_tol);
        for (double v : {0.0, 1.0}) {
            auto l = nd.lo, h = nd.hi;
            l[j] = h[j] = v;
            consider(std::move(l), std::move(h), nd.depth + 1);
        }
    }
    bool exhausted = open.empty();
    if (best_x.empty()) {
        out.status = exhausted ? SolveStatus::Infeasible : SolveStatus::NodeLimit;
        return out;
    }
    out.status = exhausted ? SolveStatus::Optimal : SolveStatus::NodeLimit;
    out.x = best_x;
    out.objective = m.objective(best_x);
    return out;
}

int find_root(std::vector<int>& p, int x) {
    while (p[x] != x) x = p[x] = p[p[x]];
    return x;
}

}  // namespace

MilpResult solve_milp(const MilpModel& m, const MilpOptions& opt) {
    const int n = static_cast<int>(m.vars.size());
    if (m.cost.size() != m.vars.size()) throw std::invalid_argument("solve_milp: cost size != variable count");
    if (!opt.decompose || n == 0) return branch_and_bound(m, opt);

    std::vector<int> parent(n);
    std::iota(parent.begin(), parent.end(), 0);
    for (auto& c : m.cons)
        for (size_t k = 1; k < c.terms.size(); ++k) {
            int a = find_root(parent, c.terms[0].first), b = find_root(parent, c.terms[k].first);
            if (a != b) parent[std::max(a, b)] = std::min(a, b);
        }
    std::map<int, std::vector<int>> comp_vars;
    for (int j = 0; j < n; ++j) comp_vars[find_root(parent, j)].push_back(j);
    std::map<int, std::vector<size_t>> comp_cons;
    for (size_t i = 0; i < m.cons.size(); ++i) {
        if (m.cons[i].terms.empty()) {
            const auto& c = m.cons[i];
            bool ok = (c.sense == Sense::LE ? 0 <= c.rhs + 1e-12 : c.sense == Sense::GE ? 0 >= c.rhs - 1e-12
                                                                                        : std::abs(c.rhs) <= 1e-12);
            if (!ok) {
                MilpResult bad;
                if (c.group >= 0) bad.infeasible_groups.push_back(c.group);
                return bad;
            }
            continue;
        }
        comp_cons[find_root(parent, m.cons[i].terms[0].first)].push_back(i);
    }

    MilpResult out;
    out.status = SolveStatus::Optimal;
    out.x.assign(n, 0.0);
    std::set<int> bad_groups;
    for (auto& [root, vs] : comp_vars) {
        MilpModel sub;
        sub.big_M = m.big_M;
        sub.strict_slack = m.strict_slack;
        std::map<int, int> local;
        for (int v : vs) {
            local[v] = static_cast<int>(sub.vars.size());
            sub.vars.push_back(m.vars[v]);
            sub.cost.push_back(m.cost[v]);
        }
        for (size_t i : comp_cons[root]) {
            Constraint c = m.cons[i];
            for (auto& [v, a] : c.terms) v = local.at(v);
            sub.cons.push_back(std::move(c));
        }
        auto r = branch_and_bound(sub, opt);
        out.nodes += r.nodes;
        if (r.status == SolveStatus::Optimal || (r.status == SolveStatus::NodeLimit && !r.x.empty())) {
            for (int v : vs) out.x[v] = r.x[local[v]];
            if (r.status == SolveStatus::NodeLimit) out.status = SolveStatus::NodeLimit;
        } else {
            if (out.status != SolveStatus::Infeasible) out.status = r.status;
            if (r.status == SolveStatus::Infeasible) out.status = SolveStatus::Infeasible;
            for (size_t i : comp_cons[root])
                if (m.cons[i].group >= 0) bad_groups.insert(m.cons[i].group);
        }
    }
    out.infeasible_groups.assign(bad_groups.begin(), bad_groups.end());
    if (out.status == SolveStatus::Infeasible) out.x.clear();
    out.objective = out.x.empty() ? 0.0 : m.objective(out.x);
    return out;
}

}  // namespace conflate
