#include "dhn/nlp.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <stdexcept>
#include <unordered_map>

#include <Eigen/SparseCholesky>
#include <spdlog/spdlog.h>

namespace dhn {

using Eigen::SparseMatrix;
using Eigen::VectorXd;

// ---------------------------------------------------------------- QuadraticNlp

QuadraticNlp::QuadraticNlp(int n, int m)
    : n_(n), m_(m), xl_(VectorXd::Constant(n, -kInf)), xu_(VectorXd::Constant(n, kInf)),
      gl_(VectorXd::Zero(m)), gu_(VectorXd::Zero(m)), con_const_(VectorXd::Zero(m)) {}

void QuadraticNlp::set_var_bounds(int i, double lo, double hi) {
    xl_[i] = lo;
    xu_[i] = hi;
}

void QuadraticNlp::set_con_bounds(int r, double lo, double hi) {
    gl_[r] = lo;
    gu_[r] = hi;
}

int QuadraticNlp::tag_index(const std::string& tag) {
    for (std::size_t k = 0; k < tag_names_.size(); ++k)
        if (tag_names_[k] == tag) return static_cast<int>(k);
    tag_names_.push_back(tag);
    return static_cast<int>(tag_names_.size()) - 1;
}

std::vector<std::string> QuadraticNlp::tags() const {
    return {tag_names_.begin() + 1, tag_names_.end()};
}

void QuadraticNlp::add_obj_linear(int i, double coef) {
    if (coef == 0.0) return;
    obj_lin_.push_back({-1, i, coef, -1, tag_index(tag_)});
}

void QuadraticNlp::add_obj_quad(int i, int j, double coef) {
    if (coef == 0.0) return;
    Quad q{-1, i, j, coef};
    q.tag = tag_index(tag_);
    obj_quad_.push_back(q);
}

void QuadraticNlp::add_con_const(int r, double c) { con_const_[r] += c; }

void QuadraticNlp::add_con_linear(int r, int i, double coef) {
    if (coef == 0.0) return;
    con_lin_.push_back({r, i, coef});
}

void QuadraticNlp::add_con_quad(int r, int i, int j, double coef) {
    if (coef == 0.0) return;
    con_quad_.push_back(Quad{r, i, j, coef});
}

void QuadraticNlp::finalize() {
    std::unordered_map<long long, int> jac, hess;
    auto jac_pos = [&](int r, int c) {
        long long key = static_cast<long long>(r) * n_ + c;
        auto it = jac.find(key);
        if (it != jac.end()) return it->second;
        int p = static_cast<int>(jac_pattern_.size());
        jac_pattern_.emplace_back(r, c);
        jac.emplace(key, p);
        return p;
    };
    auto hess_pos = [&](int i, int j) {
        int r = std::max(i, j), c = std::min(i, j);
        long long key = static_cast<long long>(r) * n_ + c;
        auto it = hess.find(key);
        if (it != hess.end()) return it->second;
        int p = static_cast<int>(hess_pattern_.size());
        hess_pattern_.emplace_back(r, c);
        hess.emplace(key, p);
        return p;
    };
    jac_pattern_.clear();
    hess_pattern_.clear();
    for (auto& t : con_lin_) t.pos = jac_pos(t.row, t.var);
    for (auto& t : con_quad_) {
        t.pos_i = jac_pos(t.row, t.i);
        t.pos_j = jac_pos(t.row, t.j);
        t.hpos = hess_pos(t.i, t.j);
    }
    for (auto& t : obj_quad_) t.hpos = hess_pos(t.i, t.j);
    finalized_ = true;
}

double QuadraticNlp::objective(const VectorXd& x) const {
    double f = obj_const_;
    for (const auto& t : obj_lin_) f += t.coef * x[t.var];
    for (const auto& t : obj_quad_) f += t.coef * x[t.i] * x[t.j];
    return f;
}

double QuadraticNlp::objective_part(const VectorXd& x, const std::string& tag) const {
    int k = -1;
    for (std::size_t i = 0; i < tag_names_.size(); ++i)
        if (tag_names_[i] == tag) k = static_cast<int>(i);
    if (k < 0) return 0.0;
    double f = 0.0;
    for (const auto& t : obj_lin_)
        if (t.tag == k) f += t.coef * x[t.var];
    for (const auto& t : obj_quad_)
        if (t.tag == k) f += t.coef * x[t.i] * x[t.j];
    return f;
}

void QuadraticNlp::gradient(const VectorXd& x, VectorXd& grad) const {
    grad.setZero(n_);
    for (const auto& t : obj_lin_) grad[t.var] += t.coef;
    for (const auto& t : obj_quad_) {
        grad[t.i] += t.coef * x[t.j];
        grad[t.j] += t.coef * x[t.i];
    }
}

void QuadraticNlp::constraints(const VectorXd& x, VectorXd& g) const {
    g = con_const_;
    for (const auto& t : con_lin_) g[t.row] += t.coef * x[t.var];
    for (const auto& t : con_quad_) g[t.row] += t.coef * x[t.i] * x[t.j];
}

void QuadraticNlp::jacobian_values(const VectorXd& x, VectorXd& values) const {
    if (!finalized_) throw std::logic_error("QuadraticNlp::finalize not called");
    values.setZero(static_cast<int>(jac_pattern_.size()));
    for (const auto& t : con_lin_) values[t.pos] += t.coef;
    for (const auto& t : con_quad_) {
        values[t.pos_i] += t.coef * x[t.j];
        values[t.pos_j] += t.coef * x[t.i];
    }
}

void QuadraticNlp::hessian_values(const VectorXd&, double obj_factor, const VectorXd& lambda,
                                  VectorXd& values) const {
    if (!finalized_) throw std::logic_error("QuadraticNlp::finalize not called");
    values.setZero(static_cast<int>(hess_pattern_.size()));
    for (const auto& t : obj_quad_) values[t.hpos] += obj_factor * t.coef * (t.i == t.j ? 2.0 : 1.0);
    for (const auto& t : con_quad_) values[t.hpos] += lambda[t.row] * t.coef * (t.i == t.j ? 2.0 : 1.0);
}

SparseMatrix<double> QuadraticNlp::jacobian(const VectorXd& x) const {
    VectorXd vals;
    jacobian_values(x, vals);
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(jac_pattern_.size());
    for (std::size_t k = 0; k < jac_pattern_.size(); ++k)
        trip.emplace_back(jac_pattern_[k].first, jac_pattern_[k].second, vals[static_cast<int>(k)]);
    SparseMatrix<double> J(m_, n_);
    J.setFromTriplets(trip.begin(), trip.end());
    return J;
}

// ---------------------------------------------------------------- helpers

const char* to_string(NlpStatus s) {
    switch (s) {
        case NlpStatus::Optimal: return "optimal";
        case NlpStatus::Acceptable: return "acceptable";
        case NlpStatus::Infeasible: return "infeasible";
        case NlpStatus::IterationLimit: return "iteration-limit";
        case NlpStatus::TimeLimit: return "time-limit";
    }
    return "unknown";
}

bool NlpSolution::usable(double feas_tol) const {
    if (status == NlpStatus::Optimal || status == NlpStatus::Acceptable) return true;
    if (status == NlpStatus::Infeasible) return false;
    return x.size() > 0 && max_violation <= feas_tol;
}

double max_violation(const NlpProblem& p, const VectorXd& x) {
    double v = 0.0;
    const auto& xl = p.x_lower();
    const auto& xu = p.x_upper();
    for (int i = 0; i < x.size(); ++i) v = std::max({v, xl[i] - x[i], x[i] - xu[i]});
    VectorXd g;
    p.constraints(x, g);
    for (int r = 0; r < g.size(); ++r) v = std::max({v, p.g_lower()[r] - g[r], g[r] - p.g_upper()[r]});
    return v;
}

namespace {

// Value index of (row, col) in a compressed column-major matrix.
int find_entry(const SparseMatrix<double>& M, int row, int col) {
    const int* inner = M.innerIndexPtr();
    int b = M.outerIndexPtr()[col], e = M.outerIndexPtr()[col + 1];
    const int* it = std::lower_bound(inner + b, inner + e, row);
    if (it == inner + e || *it != row) throw std::logic_error("KKT pattern entry missing");
    return static_cast<int>(it - inner);
}

struct Filter {
    std::vector<std::pair<double, double>> entries;
    bool acceptable(double theta, double phi) const {
        for (const auto& [t, p] : entries)
            if (theta >= t && phi >= p) return false;
        return true;
    }
    void add(double theta, double phi) {
        std::vector<std::pair<double, double>> kept;
        for (const auto& e : entries)
            if (!(e.first >= theta && e.second >= phi)) kept.push_back(e);
        kept.emplace_back(theta, phi);
        entries.swap(kept);
    }
};

class InteriorPoint {
public:
    InteriorPoint(const NlpProblem& p, const NlpLimits& lim) : p_(p), lim_(lim) {}

    NlpSolution run(const VectorXd& x0, const NlpSolution* warm);

private:
    using Clock = std::chrono::steady_clock;

    void setup(const VectorXd& x0, const NlpSolution* warm);
    void evaluate(const VectorXd& z, double& f, VectorXd& c) const;
    void evaluate_derivatives(const VectorXd& z);
    double barrier(const VectorXd& z, double f) const;
    VectorXd barrier_gradient(const VectorXd& z) const;
    VectorXd dual_residual(const VectorXd& yv, const VectorXd& vl, const VectorXd& vu) const;
    double optimality_error(double mu, double* primal = nullptr) const;
    bool factorize(double delta_w, double delta_c);
    bool solve_kkt(bool hessian, double& delta_w);
    VectorXd kkt_solve(const VectorXd& rhs) const;
    double step_to_boundary(const VectorXd& z, const VectorXd& dz, double tau) const;
    double dual_step_to_boundary(const VectorXd& v, const VectorXd& dv, const std::vector<char>& mask,
                                 double tau) const;
    bool restoration();
    void reset_bound_multipliers();
    NlpSolution finish(NlpStatus status, int iter);
    bool out_of_time() const {
        return std::chrono::duration<double>(Clock::now() - start_).count() > lim_.max_wall_seconds;
    }

    const NlpProblem& p_;
    NlpLimits lim_;
    Clock::time_point start_;
    int n_ = 0, m_ = 0, ns_ = 0, N_ = 0;
    std::vector<int> slack_row_;   // slack k -> row
    std::vector<int> row_slack_;   // row -> slack or -1
    VectorXd l_, u_;               // bounds on z = (x, s)
    std::vector<char> has_l_, has_u_, fixed_;
    VectorXd row_scale_;
    double obj_scale_ = 1.0;
    VectorXd gl_s_, gu_s_;         // scaled constraint bounds

    VectorXd z_, y_, vl_, vu_;
    double mu_ = 0.1;
    double f_ = 0.0;
    VectorXd c_, grad_, jac_vals_, hess_vals_;
    const std::vector<std::pair<int, int>>* jac_pat_ = nullptr;
    const std::vector<std::pair<int, int>>* hess_pat_ = nullptr;

    SparseMatrix<double> K_;
    std::vector<int> pos_hess_, pos_diag_, pos_jac_, pos_slack_, pos_cdiag_;
    Eigen::SimplicialLDLT<SparseMatrix<double>, Eigen::Lower> ldlt_;
    bool analyzed_ = false;
    double delta_w_last_ = 0.0;
    double delta_c_ = 0.0;

    VectorXd dz_, dy_;
    Filter filter_;
    double theta_max_ = 0.0, theta_min_ = 0.0;
};

void InteriorPoint::setup(const VectorXd& x0, const NlpSolution* warm) {
    n_ = p_.num_vars();
    m_ = p_.num_cons();
    const VectorXd& xl = p_.x_lower();
    const VectorXd& xu = p_.x_upper();
    const VectorXd& gl = p_.g_lower();
    const VectorXd& gu = p_.g_upper();
    row_slack_.assign(m_, -1);
    slack_row_.clear();
    for (int r = 0; r < m_; ++r) {
        if (gl[r] == gu[r]) continue;
        row_slack_[r] = static_cast<int>(slack_row_.size());
        slack_row_.push_back(r);
    }
    ns_ = static_cast<int>(slack_row_.size());
    N_ = n_ + ns_;
    jac_pat_ = &p_.jacobian_structure();
    hess_pat_ = &p_.hessian_structure();

    // gradient based scaling at the starting point
    VectorXd x = x0;
    for (int i = 0; i < n_; ++i) x[i] = std::clamp(x[i], xl[i], xu[i]);
    VectorXd g0;
    p_.gradient(x, g0);
    double gmax = g0.size() ? g0.lpNorm<Eigen::Infinity>() : 0.0;
    obj_scale_ = gmax > 100.0 ? 100.0 / gmax : 1.0;
    VectorXd jv;
    p_.jacobian_values(x, jv);
    VectorXd rowmax = VectorXd::Zero(m_);
    for (std::size_t k = 0; k < jac_pat_->size(); ++k) {
        int r = (*jac_pat_)[k].first;
        rowmax[r] = std::max(rowmax[r], std::abs(jv[static_cast<int>(k)]));
    }
    row_scale_.resize(m_);
    for (int r = 0; r < m_; ++r) row_scale_[r] = rowmax[r] > 100.0 ? 100.0 / rowmax[r] : 1.0;
    gl_s_ = gl.cwiseProduct(row_scale_);
    gu_s_ = gu.cwiseProduct(row_scale_);

    l_.resize(N_);
    u_.resize(N_);
    l_.head(n_) = xl;
    u_.head(n_) = xu;
    for (int k = 0; k < ns_; ++k) {
        l_[n_ + k] = gl_s_[slack_row_[k]];
        u_[n_ + k] = gu_s_[slack_row_[k]];
    }
    has_l_.assign(N_, 0);
    has_u_.assign(N_, 0);
    fixed_.assign(N_, 0);
    for (int i = 0; i < N_; ++i) {
        if (l_[i] == u_[i]) {
            fixed_[i] = 1;
            continue;
        }
        has_l_[i] = std::isfinite(l_[i]);
        has_u_[i] = std::isfinite(u_[i]);
    }

    bool use_warm = warm && warm->x.size() == n_ && warm->lambda.size() == m_;
    double push = use_warm ? lim_.warm_bound_push : lim_.bound_push;
    mu_ = use_warm ? lim_.warm_mu_init : lim_.mu_init;

    auto push_inside = [&](int i, double v) {
        if (fixed_[i]) return l_[i];
        if (has_l_[i] && has_u_[i]) {
            double pl = std::min(push * std::max(1.0, std::abs(l_[i])), push * (u_[i] - l_[i]));
            double pu = std::min(push * std::max(1.0, std::abs(u_[i])), push * (u_[i] - l_[i]));
            return std::clamp(v, l_[i] + pl, u_[i] - pu);
        }
        if (has_l_[i]) return std::max(v, l_[i] + push * std::max(1.0, std::abs(l_[i])));
        if (has_u_[i]) return std::min(v, u_[i] - push * std::max(1.0, std::abs(u_[i])));
        return v;
    };

    z_.resize(N_);
    for (int i = 0; i < n_; ++i) z_[i] = push_inside(i, x0[i]);
    VectorXd g;
    p_.constraints(z_.head(n_), g);
    for (int k = 0; k < ns_; ++k) z_[n_ + k] = push_inside(n_ + k, g[slack_row_[k]] * row_scale_[slack_row_[k]]);

    y_ = VectorXd::Zero(m_);
    vl_ = VectorXd::Zero(N_);
    vu_ = VectorXd::Zero(N_);
    reset_bound_multipliers();
    if (use_warm) {
        for (int r = 0; r < m_; ++r) y_[r] = warm->lambda[r] * obj_scale_ / row_scale_[r];
        for (int i = 0; i < n_; ++i) {
            if (has_l_[i] && warm->z_lower.size() == n_)
                vl_[i] = std::max(warm->z_lower[i] * obj_scale_, 1e-2 * mu_ / (z_[i] - l_[i]));
            if (has_u_[i] && warm->z_upper.size() == n_)
                vu_[i] = std::max(warm->z_upper[i] * obj_scale_, 1e-2 * mu_ / (u_[i] - z_[i]));
        }
    }

    // KKT pattern: lower triangle of [[W + Sigma, J'], [J, -delta_c]]
    std::vector<Eigen::Triplet<double>> trip;
    for (const auto& [r, c] : *hess_pat_) trip.emplace_back(r, c, 0.0);
    for (int i = 0; i < N_; ++i) trip.emplace_back(i, i, 0.0);
    for (const auto& [r, c] : *jac_pat_) trip.emplace_back(N_ + r, c, 0.0);
    for (int k = 0; k < ns_; ++k) trip.emplace_back(N_ + slack_row_[k], n_ + k, 0.0);
    for (int r = 0; r < m_; ++r) trip.emplace_back(N_ + r, N_ + r, 0.0);
    K_.resize(N_ + m_, N_ + m_);
    K_.setFromTriplets(trip.begin(), trip.end());
    K_.makeCompressed();
    pos_hess_.clear();
    for (const auto& [r, c] : *hess_pat_) pos_hess_.push_back(find_entry(K_, r, c));
    pos_diag_.resize(N_);
    for (int i = 0; i < N_; ++i) pos_diag_[i] = find_entry(K_, i, i);
    pos_jac_.clear();
    for (const auto& [r, c] : *jac_pat_) pos_jac_.push_back(find_entry(K_, N_ + r, c));
    pos_slack_.resize(ns_);
    for (int k = 0; k < ns_; ++k) pos_slack_[k] = find_entry(K_, N_ + slack_row_[k], n_ + k);
    pos_cdiag_.resize(m_);
    for (int r = 0; r < m_; ++r) pos_cdiag_[r] = find_entry(K_, N_ + r, N_ + r);
}

void InteriorPoint::reset_bound_multipliers() {
    for (int i = 0; i < N_; ++i) {
        vl_[i] = has_l_[i] ? mu_ / std::max(z_[i] - l_[i], 1e-300) : 0.0;
        vu_[i] = has_u_[i] ? mu_ / std::max(u_[i] - z_[i], 1e-300) : 0.0;
    }
}

void InteriorPoint::evaluate(const VectorXd& z, double& f, VectorXd& c) const {
    VectorXd x = z.head(n_);
    f = obj_scale_ * p_.objective(x);
    VectorXd g;
    p_.constraints(x, g);
    c.resize(m_);
    for (int r = 0; r < m_; ++r) {
        double gs = g[r] * row_scale_[r];
        c[r] = row_slack_[r] < 0 ? gs - gl_s_[r] : gs - z[n_ + row_slack_[r]];
    }
}

void InteriorPoint::evaluate_derivatives(const VectorXd& z) {
    VectorXd x = z.head(n_);
    VectorXd g;
    p_.gradient(x, g);
    grad_ = VectorXd::Zero(N_);
    grad_.head(n_) = obj_scale_ * g;
    p_.jacobian_values(x, jac_vals_);
    for (std::size_t k = 0; k < jac_pat_->size(); ++k)
        jac_vals_[static_cast<int>(k)] *= row_scale_[(*jac_pat_)[k].first];
}

double InteriorPoint::barrier(const VectorXd& z, double f) const {
    double phi = f;
    for (int i = 0; i < N_; ++i) {
        if (has_l_[i]) {
            double s = z[i] - l_[i];
            if (s <= 0) return kInf;
            phi -= mu_ * std::log(s);
        }
        if (has_u_[i]) {
            double s = u_[i] - z[i];
            if (s <= 0) return kInf;
            phi -= mu_ * std::log(s);
        }
    }
    return phi;
}

VectorXd InteriorPoint::barrier_gradient(const VectorXd& z) const {
    VectorXd gp = grad_;
    for (int i = 0; i < N_; ++i) {
        if (fixed_[i]) {
            gp[i] = 0.0;
            continue;
        }
        if (has_l_[i]) gp[i] -= mu_ / (z[i] - l_[i]);
        if (has_u_[i]) gp[i] += mu_ / (u_[i] - z[i]);
    }
    return gp;
}

// grad f + J' y - vl + vu over z.
VectorXd InteriorPoint::dual_residual(const VectorXd& yv, const VectorXd& vl, const VectorXd& vu) const {
    VectorXd r = grad_ - vl + vu;
    for (std::size_t k = 0; k < jac_pat_->size(); ++k) {
        const auto& [row, col] = (*jac_pat_)[k];
        r[col] += jac_vals_[static_cast<int>(k)] * yv[row];
    }
    for (int k = 0; k < ns_; ++k) r[n_ + k] -= yv[slack_row_[k]];
    for (int i = 0; i < N_; ++i)
        if (fixed_[i]) r[i] = 0.0;
    return r;
}

double InteriorPoint::optimality_error(double mu, double* primal) const {
    const double s_max = 100.0;
    VectorXd rd = dual_residual(y_, vl_, vu_);
    double vsum = vl_.lpNorm<1>() + vu_.lpNorm<1>();
    double s_d = std::max(s_max, (y_.lpNorm<1>() + vsum) / std::max(1, m_ + 2 * N_)) / s_max;
    double s_c = std::max(s_max, vsum / std::max(1, 2 * N_)) / s_max;
    double comp = 0.0;
    for (int i = 0; i < N_; ++i) {
        if (has_l_[i]) comp = std::max(comp, std::abs((z_[i] - l_[i]) * vl_[i] - mu));
        if (has_u_[i]) comp = std::max(comp, std::abs((u_[i] - z_[i]) * vu_[i] - mu));
    }
    double pr = c_.size() ? c_.lpNorm<Eigen::Infinity>() : 0.0;
    if (primal) *primal = pr;
    double du = rd.size() ? rd.lpNorm<Eigen::Infinity>() : 0.0;
    return std::max({du / s_d, pr, comp / s_c});
}

bool InteriorPoint::factorize(double delta_w, double delta_c) {
    double* v = K_.valuePtr();
    std::fill(v, v + K_.nonZeros(), 0.0);
    for (std::size_t k = 0; k < hess_pat_->size(); ++k) {
        const auto& [r, c] = (*hess_pat_)[k];
        if (fixed_[r] || fixed_[c]) continue;
        v[pos_hess_[k]] += hess_vals_[static_cast<int>(k)];
    }
    for (int i = 0; i < N_; ++i) {
        if (fixed_[i]) {
            v[pos_diag_[i]] = 1.0;
            continue;
        }
        double sig = 0.0;
        if (has_l_[i]) sig += vl_[i] / (z_[i] - l_[i]);
        if (has_u_[i]) sig += vu_[i] / (u_[i] - z_[i]);
        v[pos_diag_[i]] += sig + delta_w;
    }
    for (std::size_t k = 0; k < jac_pat_->size(); ++k) {
        if (fixed_[(*jac_pat_)[k].second]) continue;
        v[pos_jac_[k]] += jac_vals_[static_cast<int>(k)];
    }
    for (int k = 0; k < ns_; ++k)
        if (!fixed_[n_ + k]) v[pos_slack_[k]] = -1.0;
    for (int r = 0; r < m_; ++r) v[pos_cdiag_[r]] = -delta_c;
    delta_c_ = delta_c;
    if (!analyzed_) {
        ldlt_.analyzePattern(K_);
        analyzed_ = true;
    }
    ldlt_.factorize(K_);
    if (ldlt_.info() != Eigen::Success) return false;
    const VectorXd& D = ldlt_.vectorD();
    int pos = 0, neg = 0;
    for (int i = 0; i < D.size(); ++i) {
        if (!std::isfinite(D[i])) return false;
        if (D[i] > 0) ++pos;
        else if (D[i] < 0) ++neg;
    }
    return pos == N_ && neg == m_;
}

// Solve with iterative refinement toward the system without delta_c.
VectorXd InteriorPoint::kkt_solve(const VectorXd& rhs) const {
    VectorXd sol = ldlt_.solve(rhs);
    auto apply = [&](const VectorXd& v) {
        VectorXd out = K_.selfadjointView<Eigen::Lower>() * v;
        out.tail(m_) += delta_c_ * v.tail(m_);
        return out;
    };
    double rn = rhs.lpNorm<Eigen::Infinity>();
    VectorXd res = rhs - apply(sol);
    double best = res.lpNorm<Eigen::Infinity>();
    for (int it = 0; it < 3 && best > 1e-12 * std::max(1.0, rn); ++it) {
        VectorXd cand = sol + ldlt_.solve(res);
        VectorXd rc = rhs - apply(cand);
        double nr = rc.lpNorm<Eigen::Infinity>();
        if (!(nr < 0.5 * best)) break;
        sol = cand;
        res = rc;
        best = nr;
    }
    if (lim_.verbose) spdlog::info("ipm   kkt residual {:.2e} of {:.2e}", best, rn);
    return sol;
}

// Newton step for the current barrier subproblem. Returns false if the
// matrix could not be made to have the right inertia.
bool InteriorPoint::solve_kkt(bool hessian, double& delta_w) {
    if (hessian) {
        VectorXd yu(m_);
        for (int r = 0; r < m_; ++r) yu[r] = y_[r] * row_scale_[r];
        p_.hessian_values(z_.head(n_), obj_scale_, yu, hess_vals_);
    }
    double delta_c = 1e-9;
    delta_w = 0.0;
    bool ok = factorize(delta_w, delta_c);
    if (!ok) {
        delta_w = delta_w_last_ == 0.0 ? 1e-4 : std::max(1e-20, delta_w_last_ / 3.0);
        while (true) {
            ok = factorize(delta_w, delta_c);
            if (ok) break;
            delta_w *= delta_w_last_ == 0.0 ? 100.0 : 8.0;
            if (delta_w > 1e40) return false;
            if (delta_w > 1e-2) delta_c = 1e-6;
        }
        delta_w_last_ = delta_w;
    }
    VectorXd rhs(N_ + m_);
    rhs.head(N_) = -(barrier_gradient(z_) + (dual_residual(y_, VectorXd::Zero(N_), VectorXd::Zero(N_)) - grad_));
    for (int i = 0; i < N_; ++i)
        if (fixed_[i]) rhs[i] = 0.0;
    rhs.tail(m_) = -c_;
    VectorXd sol = kkt_solve(rhs);
    dz_ = sol.head(N_);
    dy_ = sol.tail(m_);
    return true;
}

double InteriorPoint::step_to_boundary(const VectorXd& z, const VectorXd& dz, double tau) const {
    double a = 1.0;
    for (int i = 0; i < N_; ++i) {
        if (has_l_[i] && dz[i] < 0) a = std::min(a, -tau * (z[i] - l_[i]) / dz[i]);
        if (has_u_[i] && dz[i] > 0) a = std::min(a, tau * (u_[i] - z[i]) / dz[i]);
    }
    return a;
}

double InteriorPoint::dual_step_to_boundary(const VectorXd& v, const VectorXd& dv, const std::vector<char>& mask,
                                            double tau) const {
    double a = 1.0;
    for (int i = 0; i < N_; ++i)
        if (mask[i] && dv[i] < 0) a = std::min(a, -tau * v[i] / dv[i]);
    return a;
}

// Feasibility restoration: damped Gauss-Newton on ||c|| with the barrier
// terms keeping the iterate interior. Returns false if no progress is made.
bool InteriorPoint::restoration() {
    double f;
    double theta0 = c_.lpNorm<1>();
    double zeta = std::max(1e-8, std::sqrt(mu_));
    for (int it = 0; it < 100; ++it) {
        if (out_of_time()) return false;
        evaluate_derivatives(z_);
        hess_vals_.setZero(static_cast<int>(hess_pat_->size()));
        reset_bound_multipliers();
        bool ok = false;
        double dw = zeta;
        for (int tries = 0; tries < 40 && !ok; ++tries) {
            ok = factorize(dw, 1e-9);
            if (!ok) dw *= 10.0;
        }
        if (!ok) return false;
        VectorXd rhs = VectorXd::Zero(N_ + m_);
        for (int i = 0; i < N_; ++i) {
            if (fixed_[i]) continue;
            if (has_l_[i]) rhs[i] += mu_ / (z_[i] - l_[i]) * 1e-3;
            if (has_u_[i]) rhs[i] -= mu_ / (u_[i] - z_[i]) * 1e-3;
        }
        rhs.tail(m_) = -c_;
        VectorXd sol = kkt_solve(rhs);
        VectorXd dz = sol.head(N_);
        double theta = c_.lpNorm<1>();
        double alpha = step_to_boundary(z_, dz, 0.99);
        bool accepted = false;
        VectorXd ct;
        for (int ls = 0; ls < 30; ++ls) {
            VectorXd zt = z_ + alpha * dz;
            evaluate(zt, f, ct);
            double tt = ct.lpNorm<1>();
            if (std::isfinite(tt) && tt <= (1.0 - 1e-4 * alpha) * theta) {
                z_ = zt;
                c_ = ct;
                f_ = f;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if (!accepted) {
            zeta *= 10.0;
            if (zeta > 1e10) return false;
            continue;
        }
        zeta = alpha == 1.0 ? std::max(1e-10, zeta / 10.0) : zeta;
        double tt = c_.lpNorm<1>();
        double phi = barrier(z_, f_);
        if ((tt <= 0.9 * theta0 || tt <= 1e-10) && filter_.acceptable(tt, phi)) {
            y_.setZero();
            reset_bound_multipliers();
            return true;
        }
    }
    return false;
}

NlpSolution InteriorPoint::finish(NlpStatus status, int iter) {
    NlpSolution sol;
    sol.x = z_.head(n_);
    sol.objective = p_.objective(sol.x);
    sol.status = status;
    sol.iterations = iter;
    sol.lambda.resize(m_);
    for (int r = 0; r < m_; ++r) sol.lambda[r] = y_[r] * row_scale_[r] / obj_scale_;
    sol.z_lower = vl_.head(n_) / obj_scale_;
    sol.z_upper = vu_.head(n_) / obj_scale_;
    sol.max_violation = max_violation(p_, sol.x);
    sol.wall_time = std::chrono::duration<double>(Clock::now() - start_).count();
    return sol;
}

NlpSolution InteriorPoint::run(const VectorXd& x0, const NlpSolution* warm) {
    start_ = Clock::now();
    setup(x0, warm);

    evaluate(z_, f_, c_);
    evaluate_derivatives(z_);
    double theta0 = c_.lpNorm<1>();
    theta_max_ = 1e4 * std::max(1.0, theta0);
    theta_min_ = 1e-4 * std::max(1.0, theta0);
    filter_.entries.clear();
    filter_.add(theta_max_, -kInf);

    const double kappa_eps = 10.0, kappa_mu = 0.2, theta_mu = 1.5;
    const double gamma_theta = 1e-5, gamma_phi = 1e-5, eta_phi = 1e-4;
    const double s_theta = 1.1, s_phi = 2.3, delta_sw = 1.0;
    int acceptable_count = 0;
    double mu_min = lim_.tol / 10.0;

    for (int iter = 0;; ++iter) {
        double primal;
        double e0 = optimality_error(0.0, &primal);
        double viol = 0.0;
        {
            // unscaled constraint violation
            for (int r = 0; r < m_; ++r) viol = std::max(viol, std::abs(c_[r]) / row_scale_[r]);
        }
        if (lim_.verbose)
            spdlog::info("ipm it={} f={:.6e} E0={:.3e} theta={:.3e} mu={:.1e}", iter, f_ / obj_scale_, e0,
                         c_.lpNorm<1>(), mu_);
        if (e0 <= lim_.tol && viol <= 1e-6) return finish(NlpStatus::Optimal, iter);
        if (e0 <= lim_.acceptable_tol && viol <= 1e-4) {
            if (++acceptable_count >= lim_.acceptable_iter) return finish(NlpStatus::Acceptable, iter);
        } else {
            acceptable_count = 0;
        }
        if (iter >= lim_.max_iter) return finish(NlpStatus::IterationLimit, iter);
        if (out_of_time()) return finish(NlpStatus::TimeLimit, iter);

        // barrier parameter update
        bool mu_changed = false;
        while (mu_ > mu_min && optimality_error(mu_) <= kappa_eps * mu_) {
            mu_ = std::max(mu_min, std::min(kappa_mu * mu_, std::pow(mu_, theta_mu)));
            mu_changed = true;
        }
        if (mu_changed) {
            filter_.entries.clear();
            filter_.add(theta_max_, -kInf);
        }
        double tau = std::max(0.99, 1.0 - mu_);

        double delta_w;
        if (!solve_kkt(true, delta_w)) return finish(NlpStatus::IterationLimit, iter);

        VectorXd dvl = VectorXd::Zero(N_), dvu = VectorXd::Zero(N_);
        for (int i = 0; i < N_; ++i) {
            if (has_l_[i]) dvl[i] = mu_ / (z_[i] - l_[i]) - vl_[i] - vl_[i] / (z_[i] - l_[i]) * dz_[i];
            if (has_u_[i]) dvu[i] = mu_ / (u_[i] - z_[i]) - vu_[i] + vu_[i] / (u_[i] - z_[i]) * dz_[i];
        }
        double alpha_max = step_to_boundary(z_, dz_, tau);
        double alpha_z = std::min(dual_step_to_boundary(vl_, dvl, has_l_, tau),
                                  dual_step_to_boundary(vu_, dvu, has_u_, tau));

        // filter line search
        double theta = c_.lpNorm<1>();
        double phi = barrier(z_, f_);
        double gphi = barrier_gradient(z_).dot(dz_);
        double alpha_min;
        if (gphi < 0) {
            alpha_min = 0.05 * std::min({gamma_theta, gamma_phi * theta / (-gphi),
                                         delta_sw * std::pow(theta, s_theta) / std::pow(-gphi, s_phi)});
        } else {
            alpha_min = 0.05 * gamma_theta;
        }
        double max_rel = 0.0;
        for (int i = 0; i < N_; ++i) max_rel = std::max(max_rel, std::abs(dz_[i]) / (1.0 + std::abs(z_[i])));
        bool tiny = max_rel < 1e-14;

        double alpha = alpha_max;
        bool accepted = false;
        bool f_type = false;
        VectorXd zt, ct;
        double ft = 0.0;
        for (int ls = 0; ls < 60; ++ls) {
            zt = z_ + alpha * dz_;
            evaluate(zt, ft, ct);
            double tt = ct.lpNorm<1>();
            double pt = barrier(zt, ft);
            if (tiny) {
                accepted = true;
                break;
            }
            if (std::isfinite(pt) && std::isfinite(tt) && tt < theta_max_ && filter_.acceptable(tt, pt)) {
                bool switching = gphi < 0 && alpha * std::pow(-gphi, s_phi) > delta_sw * std::pow(theta, s_theta);
                if (theta <= theta_min_ && switching) {
                    if (pt <= phi + eta_phi * alpha * gphi) {
                        accepted = true;
                        f_type = true;
                    }
                } else if (tt <= (1.0 - gamma_theta) * theta || pt <= phi - gamma_phi * theta) {
                    accepted = true;
                }
            }
            if (!accepted && ls == 0 && tt >= theta) {
                // second-order correction
                VectorXd c_soc = alpha * c_ + ct;
                double theta_old = theta;
                for (int p = 0; p < 4 && !accepted; ++p) {
                    VectorXd rhs(N_ + m_);
                    rhs.head(N_) = -(barrier_gradient(z_) +
                                     (dual_residual(y_, VectorXd::Zero(N_), VectorXd::Zero(N_)) - grad_));
                    for (int i = 0; i < N_; ++i)
                        if (fixed_[i]) rhs[i] = 0.0;
                    rhs.tail(m_) = -c_soc;
                    VectorXd sol = kkt_solve(rhs);
                    VectorXd dzs = sol.head(N_);
                    double as = step_to_boundary(z_, dzs, tau);
                    VectorXd zs = z_ + as * dzs;
                    VectorXd cs;
                    double fs;
                    evaluate(zs, fs, cs);
                    double ts = cs.lpNorm<1>();
                    double ps = barrier(zs, fs);
                    if (!std::isfinite(ps) || !filter_.acceptable(ts, ps) || ts >= theta_max_) break;
                    bool switching = gphi < 0 && alpha * std::pow(-gphi, s_phi) > delta_sw * std::pow(theta, s_theta);
                    if (theta <= theta_min_ && switching) {
                        if (ps <= phi + eta_phi * alpha * gphi) accepted = f_type = true;
                    } else if (ts <= (1.0 - gamma_theta) * theta || ps <= phi - gamma_phi * theta) {
                        accepted = true;
                    }
                    if (accepted) {
                        zt = zs;
                        ct = cs;
                        ft = fs;
                        dz_ = dzs;
                        alpha = as;
                        break;
                    }
                    if (ts > 0.99 * theta_old) break;
                    theta_old = ts;
                    c_soc = as * c_soc + cs;
                }
            }
            if (accepted) break;
            alpha *= 0.5;
            if (alpha < alpha_min) break;
        }

        if (!accepted) {
            if (!restoration()) {
                double viol_now = 0.0;
                for (int r = 0; r < m_; ++r) viol_now = std::max(viol_now, std::abs(c_[r]) / row_scale_[r]);
                return finish(viol_now > 1e-4 ? NlpStatus::Infeasible : NlpStatus::IterationLimit, iter);
            }
            evaluate_derivatives(z_);
            continue;
        }

        if (lim_.verbose)
            spdlog::info("ipm   alpha={:.3e} alpha_max={:.3e} alpha_z={:.3e} delta_w={:.1e} f_type={}", alpha, alpha_max,
                         alpha_z, delta_w, f_type);
        if (!f_type) filter_.add((1.0 - gamma_theta) * theta, phi - gamma_phi * theta);
        z_ = zt;
        c_ = ct;
        f_ = ft;
        y_ += alpha * dy_;
        vl_ += alpha_z * dvl;
        vu_ += alpha_z * dvu;
        // keep bound multipliers near the central path
        const double kappa_sigma = 1e10;
        for (int i = 0; i < N_; ++i) {
            if (has_l_[i]) {
                double s = z_[i] - l_[i];
                vl_[i] = std::clamp(vl_[i], mu_ / (kappa_sigma * s), kappa_sigma * mu_ / s);
            }
            if (has_u_[i]) {
                double s = u_[i] - z_[i];
                vu_[i] = std::clamp(vu_[i], mu_ / (kappa_sigma * s), kappa_sigma * mu_ / s);
            }
        }
        evaluate_derivatives(z_);
    }
}

}  // namespace

NlpSolution solve_nlp(const NlpProblem& problem, const VectorXd& x0, const NlpLimits& limits,
                      const NlpSolution* warm) {
    const int n = problem.num_vars();
    if (x0.size() != n) throw std::invalid_argument("solve_nlp: initial guess has wrong size");
    double gap = 0.0;
    for (int i = 0; i < n; ++i) gap = std::max(gap, problem.x_lower()[i] - problem.x_upper()[i]);
    for (int r = 0; r < problem.num_cons(); ++r) gap = std::max(gap, problem.g_lower()[r] - problem.g_upper()[r]);
    if (gap > 0) {
        NlpSolution sol;
        sol.x = x0;
        sol.status = NlpStatus::Infeasible;
        sol.objective = problem.objective(x0);
        sol.max_violation = std::max(gap, max_violation(problem, x0));
        sol.lambda = VectorXd::Zero(problem.num_cons());
        spdlog::warn("solve_nlp: empty bound interval (gap {:.3e})", gap);
        return sol;
    }
    InteriorPoint ipm(problem, limits);
    return ipm.run(x0, warm);
}

}  // namespace dhn
