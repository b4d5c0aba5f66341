#include "gradfem/sparse.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace gradfem {

CsrMatrix CsrMatrix::from_triplets(int n, const Triplets& t) {
    CsrMatrix A;
    A.n_ = n;
    std::vector<int> order(t.rows.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        if (t.rows[a] != t.rows[b]) return t.rows[a] < t.rows[b];
        return t.cols[a] < t.cols[b];
    });

    A.row_ptr_.assign(n + 1, 0);
    int last_row = -1;
    for (int idx : order) {
        int r = t.rows[idx], c = t.cols[idx];
        if (r < 0 || r >= n || c < 0 || c >= n)
            throw std::out_of_range("CsrMatrix::from_triplets: index out of range");
        if (last_row == r && !A.col_.empty() && A.col_.back() == c) {
            A.val_.back() += t.vals[idx];
        } else {
            A.col_.push_back(c);
            A.val_.push_back(t.vals[idx]);
            ++A.row_ptr_[r + 1];
            last_row = r;
        }
    }
    for (int i = 0; i < n; ++i) A.row_ptr_[i + 1] += A.row_ptr_[i];
    return A;
}

void CsrMatrix::multiply(const std::vector<double>& x, std::vector<double>& y) const {
    y.assign(n_, 0.0);
    for (int i = 0; i < n_; ++i) {
        double s = 0.0;
        for (int k = row_ptr_[i]; k < row_ptr_[i + 1]; ++k) s += val_[k] * x[col_[k]];
        y[i] = s;
    }
}

void CsrMatrix::eliminate(const std::vector<bool>& constrained) {
    for (int i = 0; i < n_; ++i)
        for (int k = row_ptr_[i]; k < row_ptr_[i + 1]; ++k) {
            if (constrained[i] || constrained[col_[k]])
                val_[k] = (i == col_[k]) ? 1.0 : 0.0;
        }
}

double CsrMatrix::diagonal(int i) const {
    for (int k = row_ptr_[i]; k < row_ptr_[i + 1]; ++k)
        if (col_[k] == i) return val_[k];
    return 0.0;
}

CgResult cg_solve(const CsrMatrix& A, const std::vector<double>& b,
                  std::vector<double>& x, double tol, int max_iter) {
    const int n = A.rows();
    if (static_cast<int>(x.size()) != n) x.assign(n, 0.0);

    std::vector<double> inv_diag(n);
    for (int i = 0; i < n; ++i) {
        double d = A.diagonal(i);
        inv_diag[i] = d != 0.0 ? 1.0 / d : 1.0;
    }

    std::vector<double> r(n), z(n), p(n), Ap(n);
    A.multiply(x, Ap);
    for (int i = 0; i < n; ++i) r[i] = b[i] - Ap[i];

    double bnorm = 0.0;
    for (double v : b) bnorm += v * v;
    bnorm = std::sqrt(bnorm);
    if (bnorm == 0.0) {
        x.assign(n, 0.0);
        return {0, 0.0, true};
    }

    for (int i = 0; i < n; ++i) z[i] = inv_diag[i] * r[i];
    p = z;
    double rz = 0.0;
    for (int i = 0; i < n; ++i) rz += r[i] * z[i];

    CgResult res;
    for (int it = 0; it < max_iter; ++it) {
        A.multiply(p, Ap);
        double pAp = 0.0;
        for (int i = 0; i < n; ++i) pAp += p[i] * Ap[i];
        if (pAp <= 0.0) break; // loss of positive definiteness: bail out
        double alpha = rz / pAp;
        for (int i = 0; i < n; ++i) {
            x[i] += alpha * p[i];
            r[i] -= alpha * Ap[i];
        }
        double rnorm = 0.0;
        for (double v : r) rnorm += v * v;
        rnorm = std::sqrt(rnorm);
        res.iterations = it + 1;
        res.residual = rnorm / bnorm;
        if (res.residual <= tol) {
            res.converged = true;
            return res;
        }
        for (int i = 0; i < n; ++i) z[i] = inv_diag[i] * r[i];
        double rz_new = 0.0;
        for (int i = 0; i < n; ++i) rz_new += r[i] * z[i];
        double beta = rz_new / rz;
        rz = rz_new;
        for (int i = 0; i < n; ++i) p[i] = z[i] + beta * p[i];
    }
    return res;
}

} // namespace gradfem
