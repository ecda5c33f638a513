#include "mlblue/covariance_lab.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "mlblue/error.hpp"

namespace mlblue {

const char* to_string(Provenance p) {
    switch (p) {
        case Provenance::unknown: return "unknown";
        case Provenance::pilot: return "pilot";
        case Provenance::extrapolated: return "extrapolated";
        case Provenance::clipped: return "clipped";
        case Provenance::exact: return "exact";
    }
    return "unknown";
}

CovarianceStore::CovarianceStore(int num_models, int num_outputs) : num_models_(num_models) {
    if (num_models < 1 || num_outputs < 1) throw ConfigError("covariance store needs at least one model and output");
    values_.assign(static_cast<std::size_t>(num_outputs), Eigen::MatrixXd::Zero(num_models, num_models));
    provenance_.assign(static_cast<std::size_t>(num_outputs),
                       std::vector<Provenance>(static_cast<std::size_t>(num_models * num_models), Provenance::unknown));
}

void CovarianceStore::set(int output, int i, int j, double value, Provenance provenance) {
    if (!std::isfinite(value)) {
        throw ConfigError("covariance (" + std::to_string(i + 1) + "," + std::to_string(j + 1) + ") is not finite");
    }
    auto& m = values_.at(static_cast<std::size_t>(output));
    m(i, j) = value;
    m(j, i) = value;
    auto& p = provenance_[static_cast<std::size_t>(output)];
    p[flat(i, j)] = provenance;
    p[flat(j, i)] = provenance;
}

void CovarianceStore::forget(int output, int i, int j) {
    auto& m = values_.at(static_cast<std::size_t>(output));
    m(i, j) = 0.0;
    m(j, i) = 0.0;
    auto& p = provenance_[static_cast<std::size_t>(output)];
    p[flat(i, j)] = Provenance::unknown;
    p[flat(j, i)] = Provenance::unknown;
}

bool CovarianceStore::known(int output, int i, int j) const {
    return provenance(output, i, j) != Provenance::unknown;
}

double CovarianceStore::value(int output, int i, int j) const {
    return values_.at(static_cast<std::size_t>(output))(i, j);
}

Provenance CovarianceStore::provenance(int output, int i, int j) const {
    return provenance_.at(static_cast<std::size_t>(output)).at(flat(i, j));
}

std::optional<std::pair<int, int>> CovarianceStore::first_unknown(int output, const Group& group) const {
    for (std::size_t a = 0; a < group.size(); ++a) {
        for (std::size_t b = a; b < group.size(); ++b) {
            const int i = std::min(group[a], group[b]);
            const int j = std::max(group[a], group[b]);
            if (!known(output, i, j)) return std::make_pair(i, j);
        }
    }
    return std::nullopt;
}

std::vector<int> CovarianceStore::degenerate_models(int output) const {
    std::vector<int> out;
    for (int i = 0; i < num_models_; ++i) {
        if (known(output, i, i) && value(output, i, i) == 0.0) out.push_back(i);
    }
    return out;
}

CovarianceStore CovarianceStore::from_dense(const std::vector<Eigen::MatrixXd>& per_output, Provenance provenance) {
    if (per_output.empty()) throw ConfigError("no covariance matrices given");
    const int l = static_cast<int>(per_output.front().rows());
    CovarianceStore store(l, static_cast<int>(per_output.size()));
    for (std::size_t s = 0; s < per_output.size(); ++s) {
        const auto& m = per_output[s];
        if (m.rows() != l || m.cols() != l) throw ConfigError("covariance matrices must all be l x l");
        for (int i = 0; i < l; ++i) {
            for (int j = i; j < l; ++j) store.set(static_cast<int>(s), i, j, 0.5 * (m(i, j) + m(j, i)), provenance);
        }
    }
    return store;
}

CovarianceStore sample_covariance(const PilotBatch& batch) {
    if (batch.samples.empty()) throw ConfigError("pilot batch has no outputs");
    const int n = batch.n_pilot();
    if (n < 2) throw ConfigError("sample covariance needs at least 2 pilot samples, got " + std::to_string(n));
    const int l = static_cast<int>(batch.samples.front().cols());
    const int m = static_cast<int>(batch.samples.size());
    CovarianceStore store(l, m);
    for (int s = 0; s < m; ++s) {
        const auto& x = batch.samples[static_cast<std::size_t>(s)];
        if (x.rows() != n || x.cols() != l) throw ConfigError("pilot sample blocks must share a common shape");
        const auto& avail = batch.available.at(static_cast<std::size_t>(s));
        std::vector<int> cols;
        for (int i = 0; i < l; ++i) {
            if (!avail.at(static_cast<std::size_t>(i))) continue;
            if (!x.col(i).allFinite()) {
                throw ConfigError("non-finite pilot sample for model " + std::to_string(i + 1) + ", output " +
                                  std::to_string(s + 1));
            }
            cols.push_back(i);
        }
        Eigen::MatrixXd centered(n, static_cast<Eigen::Index>(cols.size()));
        for (std::size_t c = 0; c < cols.size(); ++c) {
            const auto col = x.col(cols[c]);
            centered.col(static_cast<Eigen::Index>(c)) = col.array() - col.mean();
        }
        for (std::size_t a = 0; a < cols.size(); ++a) {
            for (std::size_t b = a; b < cols.size(); ++b) {
                const double cov = centered.col(static_cast<Eigen::Index>(a)).dot(centered.col(static_cast<Eigen::Index>(b))) /
                                   static_cast<double>(n - 1);
                store.set(s, cols[a], cols[b], cov, Provenance::pilot);
            }
        }
    }
    return store;
}

Eigen::MatrixXd spd_repair(const Eigen::MatrixXd& matrix, double floor) {
    if (matrix.rows() != matrix.cols()) throw ConfigError("spd_repair: matrix is not square");
    if (!(floor > 0.0)) throw ConfigError("spd_repair: floor must be positive");
    const double scale = std::max(1.0, matrix.cwiseAbs().maxCoeff());
    if ((matrix - matrix.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
        throw ConfigError("spd_repair: matrix is not symmetric");
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(matrix);
    Eigen::VectorXd lambda = eig.eigenvalues();
    const double lambda_max = lambda.maxCoeff();
    const double threshold = lambda_max > 0.0 ? floor * lambda_max : floor;
    bool changed = false;
    for (Eigen::Index i = 0; i < lambda.size(); ++i) {
        if (lambda(i) < threshold) {
            lambda(i) = threshold;
            changed = true;
        }
    }
    if (!changed) return matrix;
    const auto& v = eig.eigenvectors();
    Eigen::MatrixXd out = v * lambda.asDiagonal() * v.transpose();
    return 0.5 * (out + out.transpose());
}

Eigen::MatrixXd extract_group_covariance(const CovarianceStore& store, const Group& group, int output, double floor) {
    const auto idx = restriction_indices(group, store.num_models());
    if (auto missing = store.first_unknown(output, idx)) {
        throw ConfigError("covariance (" + std::to_string(missing->first + 1) + "," +
                          std::to_string(missing->second + 1) + ") unknown for output " + std::to_string(output + 1));
    }
    const auto n = static_cast<Eigen::Index>(idx.size());
    Eigen::MatrixXd sub(n, n);
    for (Eigen::Index a = 0; a < n; ++a) {
        for (Eigen::Index b = 0; b < n; ++b) {
            sub(a, b) = store.value(output, idx[static_cast<std::size_t>(a)], idx[static_cast<std::size_t>(b)]);
        }
    }
    return spd_repair(sub, floor);
}

GroupSet restrict_to_known(const GroupSet& groups, const CovarianceStore& store) {
    if (store.num_models() != groups.num_models || store.num_outputs() != groups.num_outputs()) {
        throw ConfigError("covariance store does not match the model set");
    }
    return restrict_groups(groups, [&](int s, const Group& g) { return store.group_known(s, g); });
}

RichardsonResult richardson_extrapolate(std::span<const double> coarse_to_fine, double rate, int num_finer,
                                        double ratio, std::optional<double> known_limit) {
    if (coarse_to_fine.size() < 2) throw ConfigError("Richardson extrapolation needs at least two level values");
    if (!(rate > 0.0)) throw ConfigError("Richardson extrapolation needs a positive rate");
    if (!(ratio > 1.0)) throw ConfigError("refinement ratio must exceed 1");
    RichardsonResult result;
    bool increasing = true;
    bool decreasing = true;
    for (std::size_t j = 1; j < coarse_to_fine.size(); ++j) {
        increasing = increasing && coarse_to_fine[j] >= coarse_to_fine[j - 1];
        decreasing = decreasing && coarse_to_fine[j] <= coarse_to_fine[j - 1];
    }
    if (!increasing && !decreasing) result.warnings.emplace_back("level values are not monotone");

    const double fine = coarse_to_fine[coarse_to_fine.size() - 1];
    const double coarse = coarse_to_fine[coarse_to_fine.size() - 2];
    const double growth = std::pow(ratio, rate);
    // With the finest known spacing as unit: v(1) = fine, v(ratio) = coarse.
    if (known_limit) {
        result.limit = *known_limit;
        result.constant = fine - result.limit;
    } else {
        result.constant = (coarse - fine) / (growth - 1.0);
        result.limit = fine - result.constant;
    }
    result.values.reserve(static_cast<std::size_t>(std::max(num_finer, 0)));
    double h_pow = 1.0;
    for (int j = 1; j <= num_finer; ++j) {
        h_pow /= growth;
        result.values.push_back(result.limit + result.constant * h_pow);
    }
    return result;
}

double fit_rate(std::span<const double> coarse_to_fine, double ratio) {
    if (coarse_to_fine.size() < 3) throw ConfigError("rate fit needs at least three level values");
    // Differences between consecutive levels decay like h^rate.
    std::vector<double> xs;
    std::vector<double> ys;
    double log_h = 0.0;
    for (std::size_t j = 0; j + 1 < coarse_to_fine.size(); ++j) {
        const double d = std::abs(coarse_to_fine[j] - coarse_to_fine[j + 1]);
        if (d > 0.0) {
            xs.push_back(log_h);
            ys.push_back(std::log(d));
        }
        log_h -= std::log(ratio);
    }
    if (xs.size() < 2) throw ConfigError("rate fit needs at least two nonzero level differences");
    const double n = static_cast<double>(xs.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t j = 0; j < xs.size(); ++j) {
        mx += xs[j];
        my += ys[j];
    }
    mx /= n;
    my /= n;
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t j = 0; j < xs.size(); ++j) {
        sxy += (xs[j] - mx) * (ys[j] - my);
        sxx += (xs[j] - mx) * (xs[j] - mx);
    }
    return sxy / sxx;
}

ReconstructedCovariance reconstruct_highfi_covariance(double var_i, double var_j, double var_diff) {
    if (var_i < 0.0 || var_j < 0.0 || var_diff < 0.0) {
        throw ConfigError("variances used for covariance reconstruction must be nonnegative");
    }
    ReconstructedCovariance out;
    out.covariance = 0.5 * ((var_i + var_j) - var_diff);
    const double bound = std::sqrt(var_i * var_j);
    if (std::abs(out.covariance) > bound) {
        out.clipped = std::abs(out.covariance) > bound * (1.0 + 1e-8);
        out.covariance = std::copysign(bound, out.covariance);
    }
    return out;
}

CovarianceStore extrapolate_highfi_covariances(const CovarianceStore& lowfi, int num_hf, int dbar, double rate,
                                               double ratio) {
    const int l = lowfi.num_models();
    if (num_hf < 1 || num_hf > l - 2) throw ConfigError("need at least two low-fidelity levels to extrapolate from");
    if (dbar < 1 || dbar > l - 2) throw ConfigError("dbar must lie in [1, l-2]");
    CovarianceStore out = lowfi;
    auto var_of_diff = [&](int s, int i, int j) {
        return lowfi.value(s, i, i) + lowfi.value(s, j, j) - 2.0 * lowfi.value(s, i, j);
    };
    for (int s = 0; s < lowfi.num_outputs(); ++s) {
        // Variances: levels l-1 (coarsest) .. num_hf (finest known).
        std::vector<double> vars;
        for (int i = l - 1; i >= num_hf; --i) {
            if (!lowfi.known(s, i, i)) throw ConfigError("low-fidelity variance of model " + std::to_string(i + 1) + " unknown");
            vars.push_back(lowfi.value(s, i, i));
        }
        const auto v_ext = richardson_extrapolate(vars, rate, num_hf, ratio);
        std::vector<double> variance(static_cast<std::size_t>(l));
        for (int i = num_hf; i < l; ++i) variance[static_cast<std::size_t>(i)] = lowfi.value(s, i, i);
        for (int j = 0; j < num_hf; ++j) {
            const int i = num_hf - 1 - j;
            variance[static_cast<std::size_t>(i)] = std::max(v_ext.values[static_cast<std::size_t>(j)], 0.0);
            out.set(s, i, i, variance[static_cast<std::size_t>(i)], Provenance::extrapolated);
        }
        for (int offset = 1; offset <= dbar; ++offset) {
            std::vector<double> diffs;
            for (int i = l - 1 - offset; i >= num_hf; --i) {
                if (!lowfi.known(s, i, i + offset)) continue;
                diffs.push_back(var_of_diff(s, i, i + offset));
            }
            if (diffs.size() < 2) continue;
            // Both models share the converged output, so the difference variance vanishes in the limit.
            const auto d_ext = richardson_extrapolate(diffs, rate, num_hf, ratio, 0.0);
            for (int j = 0; j < num_hf; ++j) {
                const int i = num_hf - 1 - j;
                const double vd = std::max(d_ext.values[static_cast<std::size_t>(j)], 0.0);
                const auto rec = reconstruct_highfi_covariance(variance[static_cast<std::size_t>(i)],
                                                               variance[static_cast<std::size_t>(i + offset)], vd);
                out.set(s, i, i + offset, rec.covariance, rec.clipped ? Provenance::clipped : Provenance::extrapolated);
            }
        }
    }
    return out;
}

}  // namespace mlblue
