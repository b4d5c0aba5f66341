#pragma once

#include <vector>

namespace gradfem {

/// Coordinate-format accumulator; duplicate entries are summed when the CSR
/// matrix is built.
struct Triplets {
    std::vector<int> rows, cols;
    std::vector<double> vals;

    void add(int r, int c, double v) {
        rows.push_back(r);
        cols.push_back(c);
        vals.push_back(v);
    }
};

class CsrMatrix {
  public:
    CsrMatrix() = default;
    static CsrMatrix from_triplets(int n, const Triplets& t);

    int rows() const { return n_; }
    void multiply(const std::vector<double>& x, std::vector<double>& y) const;

    /// Symmetric homogeneous Dirichlet elimination: zero the rows and
    /// columns of constrained dofs and put 1 on their diagonal.
    void eliminate(const std::vector<bool>& constrained);

    double diagonal(int i) const;
    const std::vector<int>& row_ptr() const { return row_ptr_; }
    const std::vector<int>& cols() const { return col_; }
    const std::vector<double>& values() const { return val_; }

  private:
    int n_ = 0;
    std::vector<int> row_ptr_;
    std::vector<int> col_;
    std::vector<double> val_;
};

struct CgResult {
    int iterations = 0;
    double residual = 0.0;
    bool converged = false;
};

/// Jacobi-preconditioned conjugate gradients for SPD systems. Deterministic
/// and serial. `x` holds the initial guess on entry and the solution on
/// exit; `tol` is relative to the right-hand side norm.
CgResult cg_solve(const CsrMatrix& A, const std::vector<double>& b,
                  std::vector<double>& x, double tol, int max_iter);

} // namespace gradfem
