#include "mlblue/blue_core.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "mlblue/error.hpp"

namespace mlblue {

namespace {

BlueTerm make_term(int k, const Group& group, int num_models, Eigen::MatrixXd covariance, double cost) {
    BlueTerm t;
    t.group = k;
    t.indices = restriction_indices(group, num_models);
    if (covariance.rows() != static_cast<Eigen::Index>(t.indices.size()) || covariance.cols() != covariance.rows()) {
        throw ConfigError("covariance of group " + std::to_string(k) + " has the wrong shape");
    }
    t.covariance = std::move(covariance);
    t.factor.compute(t.covariance);
    if (t.factor.info() != Eigen::Success) {
        throw ConfigError("covariance of group " + std::to_string(k) + " is not positive definite");
    }
    t.precision = t.factor.solve(Eigen::MatrixXd::Identity(t.covariance.rows(), t.covariance.cols()));
    t.precision = 0.5 * (t.precision + t.precision.transpose()).eval();
    t.cost = cost;
    return t;
}

void check_allocation(std::span<const double> n, const BlueSystem& system) {
    if (static_cast<int>(n.size()) != system.num_groups()) {
        throw ConfigError("allocation has " + std::to_string(n.size()) + " entries, expected " +
                          std::to_string(system.num_groups()));
    }
    for (std::size_t k = 0; k < n.size(); ++k) {
        if (!(n[k] >= 0.0)) throw ConfigError("negative sample count for group " + std::to_string(k));
    }
}

// Norm of the component of v orthogonal to the retained eigenvectors.
double outside_range(const SpectralPseudoInverse& pinv, const Eigen::VectorXd& v) {
    const auto basis = pinv.eigenvectors.leftCols(static_cast<Eigen::Index>(pinv.rank));
    return (v - basis * (basis.transpose() * v)).norm();
}

}  // namespace

BlueSystem::BlueSystem(int num_models, int num_groups, std::vector<BlueTerm> terms)
    : num_models_(num_models), num_groups_(num_groups), terms_(std::move(terms)) {
    term_of_group_.assign(static_cast<std::size_t>(num_groups_), -1);
    for (std::size_t t = 0; t < terms_.size(); ++t) {
        const int k = terms_[t].group;
        if (k < 0 || k >= num_groups_) throw ConfigError("term references group out of range");
        term_of_group_[static_cast<std::size_t>(k)] = static_cast<int>(t);
    }
}

BlueSystem BlueSystem::from_store(const GroupSet& groups, const CovarianceStore& store, int output,
                                  double spd_floor) {
    std::vector<BlueTerm> terms;
    const auto& mask = groups.allowed.at(static_cast<std::size_t>(output));
    for (int k = 0; k < groups.size(); ++k) {
        if (!mask[static_cast<std::size_t>(k)]) continue;
        const auto& g = groups.groups[static_cast<std::size_t>(k)];
        terms.push_back(make_term(k, g, groups.num_models, extract_group_covariance(store, g, output, spd_floor),
                                  groups.costs[static_cast<std::size_t>(k)]));
    }
    return BlueSystem(groups.num_models, groups.size(), std::move(terms));
}

BlueSystem BlueSystem::from_groups(int num_models, const std::vector<Group>& groups,
                                   const std::vector<Eigen::MatrixXd>& covariances, const std::vector<double>& costs) {
    if (groups.size() != covariances.size()) throw ConfigError("one covariance per group required");
    std::vector<BlueTerm> terms;
    for (std::size_t k = 0; k < groups.size(); ++k) {
        terms.push_back(make_term(static_cast<int>(k), groups[k], num_models, covariances[k],
                                  costs.empty() ? 0.0 : costs.at(k)));
    }
    return BlueSystem(num_models, static_cast<int>(groups.size()), std::move(terms));
}

Eigen::MatrixXd SpectralPseudoInverse::matrix() const {
    const auto r = static_cast<Eigen::Index>(rank);
    const auto v = eigenvectors.leftCols(r);
    Eigen::MatrixXd out = v * eigenvalues.head(r).cwiseInverse().asDiagonal() * v.transpose();
    return 0.5 * (out + out.transpose());
}

Eigen::VectorXd SpectralPseudoInverse::apply(const Eigen::VectorXd& x) const {
    const auto r = static_cast<Eigen::Index>(rank);
    const auto v = eigenvectors.leftCols(r);
    Eigen::VectorXd coeff = v.transpose() * x;
    coeff.array() /= eigenvalues.head(r).array();
    return v * coeff;
}

Eigen::MatrixXd SpectralPseudoInverse::range_projector() const {
    const auto v = eigenvectors.leftCols(static_cast<Eigen::Index>(rank));
    return v * v.transpose();
}

Eigen::MatrixXd assemble_psi(std::span<const double> n, const BlueSystem& system) {
    check_allocation(n, system);
    const int l = system.num_models();
    Eigen::MatrixXd psi = Eigen::MatrixXd::Zero(l, l);
    for (const auto& t : system.terms()) {
        const double nk = n[static_cast<std::size_t>(t.group)];
        if (nk == 0.0) continue;
        const auto size = t.indices.size();
        for (std::size_t a = 0; a < size; ++a) {
            for (std::size_t b = 0; b < size; ++b) {
                psi(t.indices[a], t.indices[b]) += nk * t.precision(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b));
            }
        }
    }
    return 0.5 * (psi + psi.transpose());
}

SpectralPseudoInverse pseudo_inverse(const Eigen::MatrixXd& m, double rtol) {
    if (m.rows() != m.cols()) throw ConfigError("pseudo_inverse: matrix is not square");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(0.5 * (m + m.transpose()));
    const Eigen::Index size = m.rows();
    SpectralPseudoInverse out;
    out.rank_tolerance = rtol;
    out.eigenvalues.resize(size);
    out.eigenvectors.resize(size, size);
    // Eigen returns ascending order; store nonincreasing.
    for (Eigen::Index i = 0; i < size; ++i) {
        out.eigenvalues(i) = eig.eigenvalues()(size - 1 - i);
        out.eigenvectors.col(i) = eig.eigenvectors().col(size - 1 - i);
    }
    const double lambda_max = size > 0 ? out.eigenvalues(0) : 0.0;
    const double cutoff = rtol * lambda_max;
    out.rank = 0;
    if (lambda_max > 0.0) {
        for (Eigen::Index i = 0; i < size; ++i) {
            if (out.eigenvalues(i) > cutoff) {
                ++out.rank;
            } else {
                out.eigenvalues(i) = 0.0;
            }
        }
    } else {
        out.eigenvalues.setZero();
    }
    return out;
}

double blue_variance(std::span<const double> n, const BlueSystem& system, double rtol) {
    const Eigen::MatrixXd psi = assemble_psi(n, system);
    bool hf_sampled = false;
    for (std::size_t t = 0; t < system.terms().size(); ++t) {
        if (system.contains_hf(static_cast<int>(t)) && n[static_cast<std::size_t>(system.terms()[t].group)] > 0.0) {
            hf_sampled = true;
        }
    }
    if (!hf_sampled) throw WellPosednessError("no group containing the high-fidelity model is sampled");
    const auto pinv = pseudo_inverse(psi, rtol);
    Eigen::VectorXd e1 = Eigen::VectorXd::Zero(system.num_models());
    e1(0) = 1.0;
    const Eigen::VectorXd x = pinv.apply(e1);
    if (outside_range(pinv, e1) > kWellPosednessTolerance) {
        throw WellPosednessError("e_1 is not in the column space of Psi");
    }
    return x(0);
}

double hf_variance_from_psi(const Eigen::MatrixXd& psi) {
    std::vector<int> support;
    for (Eigen::Index i = 0; i < psi.rows(); ++i) {
        if (psi(i, i) > 0.0) support.push_back(static_cast<int>(i));
    }
    if (support.empty() || support.front() != 0) throw WellPosednessError("high-fidelity model is not sampled");
    const auto s = static_cast<Eigen::Index>(support.size());
    Eigen::MatrixXd sub(s, s);
    for (Eigen::Index a = 0; a < s; ++a) {
        for (Eigen::Index b = 0; b < s; ++b) sub(a, b) = psi(support[static_cast<std::size_t>(a)], support[static_cast<std::size_t>(b)]);
    }
    Eigen::LLT<Eigen::MatrixXd> llt(sub);
    Eigen::VectorXd e1 = Eigen::VectorXd::Zero(s);
    e1(0) = 1.0;
    if (llt.info() == Eigen::Success) {
        const Eigen::VectorXd x = llt.solve(e1);
        if (x.allFinite() && x(0) > 0.0) return x(0);
    }
    const auto pinv = pseudo_inverse(sub);
    return pinv.apply(e1)(0);
}

double blue_variance_under(std::span<const double> n, const BlueSystem& estimator, const BlueSystem& truth) {
    const Eigen::MatrixXd psi = assemble_psi(n, estimator);
    const auto pinv = pseudo_inverse(psi);
    Eigen::VectorXd e1 = Eigen::VectorXd::Zero(estimator.num_models());
    e1(0) = 1.0;
    const Eigen::VectorXd g = pinv.apply(e1);
    if (outside_range(pinv, e1) > kWellPosednessTolerance) {
        throw WellPosednessError("e_1 is not in the column space of Psi");
    }
    double variance = 0.0;
    for (const auto& t : estimator.terms()) {
        const double nk = n[static_cast<std::size_t>(t.group)];
        if (nk == 0.0) continue;
        const int tt = truth.term_of_group(t.group);
        if (tt < 0) throw ConfigError("true system lacks group " + std::to_string(t.group));
        const auto& true_cov = truth.terms()[static_cast<std::size_t>(tt)].covariance;
        Eigen::VectorXd rg(static_cast<Eigen::Index>(t.indices.size()));
        for (std::size_t a = 0; a < t.indices.size(); ++a) rg(static_cast<Eigen::Index>(a)) = g(t.indices[a]);
        const Eigen::VectorXd w = t.factor.solve(rg);
        variance += nk * w.dot(true_cov * w);
    }
    return variance;
}

Eigen::MatrixXd null_space_basis(std::span<const double> n, const BlueSystem& system) {
    check_allocation(n, system);
    std::vector<bool> sampled(static_cast<std::size_t>(system.num_models()), false);
    for (const auto& t : system.terms()) {
        if (n[static_cast<std::size_t>(t.group)] > 0.0) {
            for (int i : t.indices) sampled[static_cast<std::size_t>(i)] = true;
        }
    }
    std::vector<int> free_models;
    for (int i = 0; i < system.num_models(); ++i) {
        if (!sampled[static_cast<std::size_t>(i)]) free_models.push_back(i);
    }
    Eigen::MatrixXd basis = Eigen::MatrixXd::Zero(system.num_models(), static_cast<Eigen::Index>(free_models.size()));
    for (std::size_t c = 0; c < free_models.size(); ++c) basis(free_models[c], static_cast<Eigen::Index>(c)) = 1.0;
    return basis;
}

BlueEstimate combine_samples(std::span<const long> n, const std::vector<Eigen::MatrixXd>& drawn,
                             const BlueSystem& system) {
    if (static_cast<int>(n.size()) != system.num_groups() || drawn.size() != n.size()) {
        throw ConfigError("allocation and sample blocks must cover every group");
    }
    const int l = system.num_models();
    Eigen::MatrixXd psi = Eigen::MatrixXd::Zero(l, l);
    Eigen::VectorXd y = Eigen::VectorXd::Zero(l);
    for (const auto& t : system.terms()) {
        const auto k = static_cast<std::size_t>(t.group);
        const long nk = n[k];
        if (nk < 0) throw ConfigError("negative sample count for group " + std::to_string(k));
        const auto& block = drawn[k];
        const auto width = static_cast<Eigen::Index>(t.indices.size());
        if (block.rows() != nk || (nk > 0 && block.cols() != width)) {
            throw ConfigError("sample block of group " + std::to_string(k) + " has shape " +
                              std::to_string(block.rows()) + "x" + std::to_string(block.cols()) + ", expected " +
                              std::to_string(nk) + "x" + std::to_string(width));
        }
        if (nk == 0) continue;
        const Eigen::VectorXd sum = block.colwise().sum().transpose();
        const Eigen::VectorXd weighted = t.factor.solve(sum);
        for (Eigen::Index a = 0; a < width; ++a) {
            y(t.indices[static_cast<std::size_t>(a)]) += weighted(a);
            for (Eigen::Index b = 0; b < width; ++b) {
                psi(t.indices[static_cast<std::size_t>(a)], t.indices[static_cast<std::size_t>(b)]) +=
                    static_cast<double>(nk) * t.precision(a, b);
            }
        }
    }
    psi = 0.5 * (psi + psi.transpose()).eval();
    BlueEstimate est;
    est.mu = pseudo_inverse(psi).apply(y);
    est.mu_hf = est.mu(0);
    return est;
}

}  // namespace mlblue
