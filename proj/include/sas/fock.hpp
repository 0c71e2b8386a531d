#pragma once

#include <complex>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace sas::fock {

using Complex = std::complex<double>;
using Matrix = Eigen::MatrixXcd;

struct Mode {
    std::string name;
    int cutoff;  // Fock levels 0 .. cutoff-1
};

// Ordered set of truncated bosonic modes. Basis index i decomposes as
// i = sum_m level_m * stride_m with the first mode slowest (row-major).
class ModeLayout {
  public:
    static constexpr int kDefaultMaxDim = 4096;

    ModeLayout() = default;
    explicit ModeLayout(std::vector<Mode> modes, int max_dim = kDefaultMaxDim);

    int dim() const { return dim_; }
    int mode_count() const { return static_cast<int>(modes_.size()); }
    const std::vector<Mode>& modes() const { return modes_; }

    int mode_index(std::string_view name) const;  // throws ConfigError on unknown name
    const std::string& mode_name(int m) const { return modes_[m].name; }
    int cutoff(int m) const { return modes_[m].cutoff; }
    int stride(int m) const { return strides_[m]; }

    // Fock level of mode m in basis state i.
    int level_of(int i, int m) const { return (i / strides_[m]) % modes_[m].cutoff; }

    bool operator==(const ModeLayout& other) const;

  private:
    std::vector<Mode> modes_;
    std::vector<int> strides_;
    int dim_ = 0;
};

ModeLayout make_layout(std::vector<Mode> modes, int max_dim = ModeLayout::kDefaultMaxDim);

struct Operator {
    ModeLayout layout;
    Matrix matrix;

    // Throws NumericalError on non-finite entries or dimension mismatch.
    void validate() const;
};

struct DensityMatrix {
    ModeLayout layout;
    Matrix matrix;

    static constexpr double kHermTol = 1e-10;
    static constexpr double kTraceTol = 1e-8;
    static constexpr double kEigTol = 1e-8;

    // Hermitian within 1e-10, unit trace within 1e-8, eigenvalues >= -1e-8.
    void validate() const;
};

Operator identity_op(const ModeLayout& layout);
Operator annihilation(const ModeLayout& layout, std::string_view mode_name);
Operator creation(const ModeLayout& layout, std::string_view mode_name);
Operator number_op(const ModeLayout& layout, std::string_view mode_name);

// Diagonal operator with entries f(n_m) on the given mode's ladder.
Operator diagonal_mode_op(const ModeLayout& layout, std::string_view mode_name,
                          const std::vector<double>& f_of_level);

DensityMatrix vacuum_state(const ModeLayout& layout);

// Product of single-mode Boltzmann-weighted diagonal states, renormalized
// after truncation so the trace is exactly one.
DensityMatrix thermal_state(const ModeLayout& layout, std::span<const double> occupancies);

Complex expectation(const Operator& op, const DensityMatrix& rho);

// Population of the top Fock level of each mode, used as a truncation guard.
std::vector<double> top_level_populations(const ModeLayout& layout, const Matrix& rho);

}  // namespace sas::fock
