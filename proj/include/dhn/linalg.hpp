#pragma once

#include <Eigen/Dense>

namespace dhn {

struct NnlsResult {
    Eigen::VectorXd x;
    double residual = 0.0;  // ||A x - b||
    int iterations = 0;
    bool converged = false;
};

// Lawson-Hanson active-set solver for min ||A x - b|| subject to x >= 0.
NnlsResult nnls(const Eigen::MatrixXd& A, const Eigen::VectorXd& b, int max_iter = 0);

}  // namespace dhn
