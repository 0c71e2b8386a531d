#include "sas/fock.hpp"

#include <cmath>
#include <set>

#include <Eigen/Eigenvalues>

#include "sas/errors.hpp"

namespace sas::fock {

ModeLayout::ModeLayout(std::vector<Mode> modes, int max_dim) : modes_(std::move(modes)) {
    if (modes_.empty()) throw ConfigError("layout needs at least one mode");
    std::set<std::string> seen;
    long long dim = 1;
    for (const auto& mode : modes_) {
        if (mode.cutoff < 2) throw ConfigError("mode '" + mode.name + "': cutoff must be >= 2");
        if (!seen.insert(mode.name).second)
            throw ConfigError("duplicate mode name '" + mode.name + "'");
        dim *= mode.cutoff;
        if (dim > max_dim)
            throw ConfigError("layout dimension exceeds limit " + std::to_string(max_dim));
    }
    dim_ = static_cast<int>(dim);
    strides_.resize(modes_.size());
    int stride = dim_;
    for (std::size_t m = 0; m < modes_.size(); ++m) {
        stride /= modes_[m].cutoff;
        strides_[m] = stride;
    }
}

int ModeLayout::mode_index(std::string_view name) const {
    for (std::size_t m = 0; m < modes_.size(); ++m)
        if (modes_[m].name == name) return static_cast<int>(m);
    throw ConfigError("unknown mode '" + std::string(name) + "'");
}

bool ModeLayout::operator==(const ModeLayout& other) const {
    if (dim_ != other.dim_ || modes_.size() != other.modes_.size()) return false;
    for (std::size_t m = 0; m < modes_.size(); ++m)
        if (modes_[m].name != other.modes_[m].name || modes_[m].cutoff != other.modes_[m].cutoff)
            return false;
    return true;
}

ModeLayout make_layout(std::vector<Mode> modes, int max_dim) {
    return ModeLayout(std::move(modes), max_dim);
}

void Operator::validate() const {
    if (matrix.rows() != layout.dim() || matrix.cols() != layout.dim())
        throw NumericalError("operator dimension does not match layout");
    if (!matrix.allFinite()) throw NumericalError("operator has non-finite entries");
}

void DensityMatrix::validate() const {
    if (matrix.rows() != layout.dim() || matrix.cols() != layout.dim())
        throw NumericalError("density matrix dimension does not match layout");
    if (!matrix.allFinite()) throw NumericalError("density matrix has non-finite entries");
    const double herm = (matrix - matrix.adjoint()).cwiseAbs().maxCoeff();
    if (herm > kHermTol) throw NumericalError("density matrix not Hermitian");
    const double trace_err = std::abs(matrix.trace() - Complex(1.0, 0.0));
    if (trace_err > kTraceTol) throw NumericalError("density matrix trace differs from one");
    Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (matrix + matrix.adjoint()),
                                             Eigen::EigenvaluesOnly);
    if (es.eigenvalues().minCoeff() < -kEigTol)
        throw NumericalError("density matrix has a negative eigenvalue");
}

Operator identity_op(const ModeLayout& layout) {
    return {layout, Matrix::Identity(layout.dim(), layout.dim())};
}

Operator annihilation(const ModeLayout& layout, std::string_view mode_name) {
    const int m = layout.mode_index(mode_name);
    const int d = layout.dim();
    const int stride = layout.stride(m);
    Matrix a = Matrix::Zero(d, d);
    for (int i = 0; i < d; ++i) {
        const int level = layout.level_of(i, m);
        if (level + 1 < layout.cutoff(m))
            a(i, i + stride) = std::sqrt(static_cast<double>(level + 1));
    }
    return {layout, std::move(a)};
}

Operator creation(const ModeLayout& layout, std::string_view mode_name) {
    Operator a = annihilation(layout, mode_name);
    return {layout, a.matrix.adjoint()};
}

Operator number_op(const ModeLayout& layout, std::string_view mode_name) {
    const int m = layout.mode_index(mode_name);
    const int d = layout.dim();
    Matrix n = Matrix::Zero(d, d);
    for (int i = 0; i < d; ++i) n(i, i) = static_cast<double>(layout.level_of(i, m));
    return {layout, std::move(n)};
}

Operator diagonal_mode_op(const ModeLayout& layout, std::string_view mode_name,
                          const std::vector<double>& f_of_level) {
    const int m = layout.mode_index(mode_name);
    if (static_cast<int>(f_of_level.size()) != layout.cutoff(m))
        throw ConfigError("diagonal_mode_op: need one value per Fock level");
    const int d = layout.dim();
    Matrix op = Matrix::Zero(d, d);
    for (int i = 0; i < d; ++i) op(i, i) = f_of_level[layout.level_of(i, m)];
    return {layout, std::move(op)};
}

DensityMatrix vacuum_state(const ModeLayout& layout) {
    Matrix rho = Matrix::Zero(layout.dim(), layout.dim());
    rho(0, 0) = 1.0;
    return {layout, std::move(rho)};
}

DensityMatrix thermal_state(const ModeLayout& layout, std::span<const double> occupancies) {
    if (static_cast<int>(occupancies.size()) != layout.mode_count())
        throw ConfigError("thermal_state: need one occupancy per mode");
    for (double nbar : occupancies)
        if (nbar < 0.0) throw ConfigError("thermal_state: negative occupancy");
    const int d = layout.dim();
    Matrix rho = Matrix::Zero(d, d);
    for (int i = 0; i < d; ++i) {
        double weight = 1.0;
        for (int m = 0; m < layout.mode_count(); ++m) {
            const double nbar = occupancies[m];
            const int level = layout.level_of(i, m);
            if (nbar == 0.0) {
                if (level != 0) weight = 0.0;
            } else {
                const double x = nbar / (1.0 + nbar);
                weight *= std::pow(x, level);
            }
        }
        rho(i, i) = weight;
    }
    rho /= rho.trace().real();
    return {layout, std::move(rho)};
}

Complex expectation(const Operator& op, const DensityMatrix& rho) {
    if (!(op.layout == rho.layout)) throw ConfigError("expectation: layout mismatch");
    return (op.matrix * rho.matrix).trace();
}

std::vector<double> top_level_populations(const ModeLayout& layout, const Matrix& rho) {
    std::vector<double> pops(layout.mode_count(), 0.0);
    for (int i = 0; i < layout.dim(); ++i) {
        const double p = rho(i, i).real();
        for (int m = 0; m < layout.mode_count(); ++m)
            if (layout.level_of(i, m) == layout.cutoff(m) - 1) pops[m] += p;
    }
    return pops;
}

}  // namespace sas::fock
