#pragma once

#include <limits>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

namespace dhn {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

// Smooth NLP: min f(x) s.t. g_l <= g(x) <= g_u, x_l <= x <= x_u.
class NlpProblem {
public:
    virtual ~NlpProblem() = default;
    virtual int num_vars() const = 0;
    virtual int num_cons() const = 0;
    virtual const Eigen::VectorXd& x_lower() const = 0;
    virtual const Eigen::VectorXd& x_upper() const = 0;
    virtual const Eigen::VectorXd& g_lower() const = 0;
    virtual const Eigen::VectorXd& g_upper() const = 0;
    virtual double objective(const Eigen::VectorXd& x) const = 0;
    virtual void gradient(const Eigen::VectorXd& x, Eigen::VectorXd& grad) const = 0;
    virtual void constraints(const Eigen::VectorXd& x, Eigen::VectorXd& g) const = 0;
    // Jacobian as CSR-free triplets on a fixed structure.
    virtual const std::vector<std::pair<int, int>>& jacobian_structure() const = 0;
    virtual void jacobian_values(const Eigen::VectorXd& x, Eigen::VectorXd& values) const = 0;
    // Lower triangle (row >= col) of the Lagrangian Hessian.
    virtual const std::vector<std::pair<int, int>>& hessian_structure() const = 0;
    virtual void hessian_values(const Eigen::VectorXd& x, double obj_factor, const Eigen::VectorXd& lambda,
                                Eigen::VectorXd& values) const = 0;
};

// Objective and constraints are sums of constant, linear and bilinear terms.
class QuadraticNlp : public NlpProblem {
public:
    QuadraticNlp(int n, int m);

    void set_var_bounds(int i, double lo, double hi);
    void set_con_bounds(int r, double lo, double hi);
    void add_obj_const(double c) { obj_const_ += c; }
    void add_obj_linear(int i, double coef);
    void add_obj_quad(int i, int j, double coef);  // coef * x_i * x_j
    void add_con_const(int r, double c);
    void add_con_linear(int r, int i, double coef);
    void add_con_quad(int r, int i, int j, double coef);
    // Call once after all terms are added.
    void finalize();

    int num_vars() const override { return n_; }
    int num_cons() const override { return m_; }
    const Eigen::VectorXd& x_lower() const override { return xl_; }
    const Eigen::VectorXd& x_upper() const override { return xu_; }
    const Eigen::VectorXd& g_lower() const override { return gl_; }
    const Eigen::VectorXd& g_upper() const override { return gu_; }
    double objective(const Eigen::VectorXd& x) const override;
    void gradient(const Eigen::VectorXd& x, Eigen::VectorXd& grad) const override;
    void constraints(const Eigen::VectorXd& x, Eigen::VectorXd& g) const override;
    const std::vector<std::pair<int, int>>& jacobian_structure() const override { return jac_pattern_; }
    void jacobian_values(const Eigen::VectorXd& x, Eigen::VectorXd& values) const override;
    const std::vector<std::pair<int, int>>& hessian_structure() const override { return hess_pattern_; }
    void hessian_values(const Eigen::VectorXd& x, double obj_factor, const Eigen::VectorXd& lambda,
                        Eigen::VectorXd& values) const override;

    // Value of the objective restricted to a subset of variables' terms.
    double objective_part(const Eigen::VectorXd& x, const std::string& tag) const;
    void set_tag(const std::string& tag) { tag_ = tag; }
    std::vector<std::string> tags() const;

    Eigen::SparseMatrix<double> jacobian(const Eigen::VectorXd& x) const;

private:
    struct Lin {
        int row, var;
        double coef;
        int pos = -1;
        int tag = 0;
    };
    struct Quad {
        int row, i, j;
        double coef;
        int pos_i = -1, pos_j = -1;  // Jacobian positions
        int hpos = -1;               // Hessian position
        int tag = 0;
    };
    int tag_index(const std::string& tag);

    int n_, m_;
    Eigen::VectorXd xl_, xu_, gl_, gu_, con_const_;
    double obj_const_ = 0.0;
    std::vector<Lin> obj_lin_, con_lin_;
    std::vector<Quad> obj_quad_, con_quad_;
    std::vector<std::pair<int, int>> jac_pattern_;
    std::vector<std::pair<int, int>> hess_pattern_;
    std::vector<std::string> tag_names_{""};
    std::string tag_;
    bool finalized_ = false;
};

enum class NlpStatus { Optimal, Acceptable, Infeasible, IterationLimit, TimeLimit };

const char* to_string(NlpStatus s);

struct NlpLimits {
    int max_iter = 500;
    double max_wall_seconds = 1e9;
    double tol = 1e-7;
    double acceptable_tol = 1e-4;
    int acceptable_iter = 10;
    double mu_init = 0.1;
    double warm_mu_init = 1e-3;
    double bound_push = 1e-2;
    double warm_bound_push = 1e-5;
    bool verbose = false;
};

struct NlpSolution {
    Eigen::VectorXd x;
    Eigen::VectorXd lambda;  // constraint multipliers
    Eigen::VectorXd z_lower;
    Eigen::VectorXd z_upper;
    double objective = 0.0;
    NlpStatus status = NlpStatus::IterationLimit;
    int iterations = 0;
    double wall_time = 0.0;
    double max_violation = 0.0;  // unscaled max constraint/bound violation
    double kkt_error = 0.0;
    std::map<std::string, double> breakdown;

    bool usable(double feas_tol = 1e-4) const;
};

NlpSolution solve_nlp(const NlpProblem& problem, const Eigen::VectorXd& x0, const NlpLimits& limits = {},
                      const NlpSolution* warm = nullptr);

// Max violation of bounds and constraints at x.
double max_violation(const NlpProblem& problem, const Eigen::VectorXd& x);

}  // namespace dhn
