#include "dhn/linalg.hpp"

#include <limits>
#include <vector>

namespace dhn {

namespace {

Eigen::VectorXd solve_passive(const Eigen::MatrixXd& A, const Eigen::VectorXd& b,
                              const std::vector<char>& passive) {
    std::vector<Eigen::Index> idx;
    for (Eigen::Index j = 0; j < A.cols(); ++j)
        if (passive[j]) idx.push_back(j);
    Eigen::MatrixXd Ap(A.rows(), static_cast<Eigen::Index>(idx.size()));
    for (std::size_t k = 0; k < idx.size(); ++k) Ap.col(static_cast<Eigen::Index>(k)) = A.col(idx[k]);
    Eigen::VectorXd zp = Ap.colPivHouseholderQr().solve(b);
    Eigen::VectorXd z = Eigen::VectorXd::Zero(A.cols());
    for (std::size_t k = 0; k < idx.size(); ++k) z(idx[k]) = zp(static_cast<Eigen::Index>(k));
    return z;
}

}  // namespace

NnlsResult nnls(const Eigen::MatrixXd& A, const Eigen::VectorXd& b, int max_iter) {
    const Eigen::Index n = A.cols();
    NnlsResult res;
    res.x = Eigen::VectorXd::Zero(n);
    if (n == 0) {
        res.residual = b.norm();
        res.converged = true;
        return res;
    }
    if (max_iter <= 0) max_iter = static_cast<int>(3 * n + 30);
    const double tol = 10.0 * std::numeric_limits<double>::epsilon() * A.cwiseAbs().maxCoeff() *
                       static_cast<double>(std::max(A.rows(), n));
    std::vector<char> passive(static_cast<std::size_t>(n), 0);
    Eigen::VectorXd& x = res.x;
    Eigen::VectorXd w = A.transpose() * (b - A * x);
    int it = 0;
    while (true) {
        Eigen::Index jmax = -1;
        double wmax = tol;
        for (Eigen::Index j = 0; j < n; ++j) {
            if (!passive[j] && w(j) > wmax) {
                wmax = w(j);
                jmax = j;
            }
        }
        if (jmax < 0) {
            res.converged = true;
            break;
        }
        if (++it > max_iter) break;
        passive[jmax] = 1;
        while (true) {
            Eigen::VectorXd z = solve_passive(A, b, passive);
            bool feasible = true;
            for (Eigen::Index j = 0; j < n; ++j)
                if (passive[j] && z(j) <= 0) feasible = false;
            if (feasible) {
                x = z;
                break;
            }
            double alpha = 1.0;
            for (Eigen::Index j = 0; j < n; ++j) {
                if (passive[j] && z(j) <= 0) {
                    double a = x(j) / (x(j) - z(j));
                    if (a < alpha) alpha = a;
                }
            }
            x += alpha * (z - x);
            for (Eigen::Index j = 0; j < n; ++j) {
                if (passive[j] && std::abs(x(j)) <= tol) {
                    passive[j] = 0;
                    x(j) = 0.0;
                }
            }
            if (++it > max_iter) break;
        }
        w = A.transpose() * (b - A * x);
    }
    x = x.cwiseMax(0.0);
    res.iterations = it;
    res.residual = (A * x - b).norm();
    return res;
}

}  // namespace dhn
