#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <vector>

#include "fslasso/basis.hpp"
#include "fslasso/fpca.hpp"
#include "fslasso/types.hpp"

namespace fslasso {

/// Column-standardize to mean 0 and empirical (1/N) variance 1.
template <class Scalar>
Mat<Scalar> standardize_columns(const Mat<Scalar>& X)
{
    const Index N = X.rows();
    require(N >= 2, "standardize_columns: need at least 2 rows");
    Mat<Scalar> Z = X.rowwise() - X.colwise().mean();
    for (Index i = 0; i < Z.cols(); ++i) {
        const Scalar sd = std::sqrt(Z.col(i).squaredNorm() / Scalar(N));
        require(sd > Scalar(0), "standardize_columns: column " + std::to_string(i) +
                                    " is constant");
        Z.col(i) /= sd;
    }
    return Z;
}

/// Scalar covariates, one column per predictor group. When standardized, the
/// column transform is kept so fresh rows can be mapped into the same scale.
template <class Scalar>
struct DesignMatrix {
    Mat<Scalar> X;
    bool standardized = false;
    Vec<Scalar> shift;  // column means removed (empty when not standardized)
    Vec<Scalar> scale;  // column sds divided out (empty when not standardized)

    Index subjects() const { return X.rows(); }
    Index predictors() const { return X.cols(); }

    /// Apply the training-column transform to new raw rows.
    Mat<Scalar> transform(const Mat<Scalar>& raw) const
    {
        if (!standardized) return raw;
        require(raw.cols() == X.cols(), "DesignMatrix::transform: column mismatch");
        return (raw.rowwise() - shift.transpose()).array().rowwise() /
               scale.transpose().array();
    }
};

using DesignMatrixd = DesignMatrix<double>;

template <class Scalar>
DesignMatrix<Scalar> make_design(const Mat<Scalar>& X, bool standardize = true)
{
    DesignMatrix<Scalar> d;
    d.standardized = standardize;
    if (!standardize) {
        d.X = X;
        return d;
    }
    const Index N = X.rows();
    require(N >= 2, "make_design: need at least 2 rows to standardize");
    d.shift = X.colwise().mean().transpose();
    d.scale.resize(X.cols());
    d.X = X.rowwise() - d.shift.transpose();
    for (Index i = 0; i < X.cols(); ++i) {
        const Scalar sd = std::sqrt(d.X.col(i).squaredNorm() / Scalar(N));
        require(sd > Scalar(0),
                "make_design: column " + std::to_string(i) + " is constant");
        d.scale[i] = sd;
        d.X.col(i) /= sd;
    }
    return d;
}

enum class DesignKind { ExplicitSparse, ImplicitKronecker };

/// The group-structured regression operator A = [A_1 ... A_I].
///
/// ExplicitSparse holds the factored block form: (A_i)(nm, j) = X(n,i) E_n(m, j),
/// stored as one shared row stack of the E_n plus X, so per-group products cost
/// O(sum_n M_n * J) without duplicating storage across groups. ImplicitKronecker
/// is A = X kron I_J applied through X; the response is the row-major vec of the
/// score matrix so that A vec(B^T) = vec-by-row of X B.
template <class Scalar>
class GroupDesign {
  public:
    static GroupDesign explicit_sparse(const DesignMatrix<Scalar>& dm,
                                       const std::vector<BasisMatrix<Scalar>>& bases,
                                       const ObservationSet<Scalar>& obs)
    {
        obs.validate();
        const Index N = dm.subjects();
        require(static_cast<Index>(bases.size()) == N,
                "build_sparse_design: one basis matrix per subject required");

        GroupDesign d;
        d.kind_ = DesignKind::ExplicitSparse;
        d.X_ = dm.X;
        d.J_ = bases.front().E.cols();
        d.offsets_.assign(static_cast<std::size_t>(N) + 1, 0);

        Index rows = 0;
        for (Index n = 0; n < N; ++n) {
            require(bases[n].E.cols() == d.J_, "build_sparse_design: mismatched J");
            require(bases[n].E.rows() == obs.subjects[n].values.size(),
                    "build_sparse_design: rows of E_n disagree with subject " +
                        std::to_string(n));
            d.offsets_[n + 1] = d.offsets_[n] + bases[n].E.rows();
            rows += bases[n].E.rows();
        }

        d.E_stack_.resize(rows, d.J_);
        d.y_.resize(rows);
        for (Index n = 0; n < N; ++n) {
            d.E_stack_.middleRows(d.offsets_[n], bases[n].E.rows()) = bases[n].E;
            d.y_.segment(d.offsets_[n], bases[n].E.rows()) = obs.subjects[n].values;
        }
        d.init_caches();
        return d;
    }

    static GroupDesign implicit_kronecker(const DesignMatrix<Scalar>& dm,
                                          const Mat<Scalar>& scores)
    {
        require(dm.subjects() == scores.rows(),
                "build_dense_design: X rows must match score rows");
        GroupDesign d;
        d.kind_ = DesignKind::ImplicitKronecker;
        d.X_ = dm.X;
        d.J_ = scores.cols();
        d.y_.resize(scores.size());
        Eigen::Map<RowMajorMat<Scalar>>(d.y_.data(), scores.rows(), scores.cols()) = scores;
        d.init_caches();
        return d;
    }

    DesignKind kind() const { return kind_; }
    Index rows() const { return y_.size(); }
    Index group_count() const { return X_.cols(); }
    Index group_dim() const { return J_; }
    Index subjects() const { return X_.rows(); }
    const Vec<Scalar>& response() const { return y_; }
    const Mat<Scalar>& covariates() const { return X_; }

    Index subject_offset(Index n) const
    {
        return kind_ == DesignKind::ExplicitSparse ? offsets_[n] : n * J_;
    }

    /// E_n^T E_n (explicit designs only).
    const Mat<Scalar>& subject_gram(Index n) const { return subject_grams_[n]; }
    Index subject_rows(Index n) const
    {
        return kind_ == DesignKind::ExplicitSparse ? offsets_[n + 1] - offsets_[n] : J_;
    }

    /// A vec(B^T); rows of B with zero norm are skipped.
    Vec<Scalar> apply(const Mat<Scalar>& B) const
    {
        require(B.rows() == group_count() && B.cols() == J_, "apply: B has wrong shape");
        if (kind_ == DesignKind::ImplicitKronecker) {
            Mat<Scalar> fitted = X_ * B;
            Vec<Scalar> out(rows());
            Eigen::Map<RowMajorMat<Scalar>>(out.data(), fitted.rows(), fitted.cols()) =
                fitted;
            return out;
        }
        Vec<Scalar> out = Vec<Scalar>::Zero(rows());
        Vec<Scalar> coef(J_);
        for (Index i = 0; i < group_count(); ++i) {
            if (B.row(i).squaredNorm() == Scalar(0)) continue;
            coef = B.row(i).transpose();
            accumulate_group(i, coef, Scalar(1), out);
        }
        return out;
    }

    Vec<Scalar> residual(const Mat<Scalar>& B) const { return y_ - apply(B); }

    /// target += scale * A_i * coef.
    void accumulate_group(Index i, const Vec<Scalar>& coef, Scalar scale,
                          Vec<Scalar>& target) const
    {
        if (kind_ == DesignKind::ImplicitKronecker) {
            Eigen::Map<RowMajorMat<Scalar>> T(target.data(), subjects(), J_);
            T.noalias() += scale * X_.col(i) * coef.transpose();
            return;
        }
        scratch_rows_.noalias() = E_stack_ * coef;
        for (Index n = 0; n < subjects(); ++n)
            target.segment(offsets_[n], subject_rows(n)) +=
                scale * X_(n, i) * scratch_rows_.segment(offsets_[n], subject_rows(n));
    }

    /// A_i^T r.
    Vec<Scalar> group_gradient(Index i, const Vec<Scalar>& r) const
    {
        if (kind_ == DesignKind::ImplicitKronecker) {
            Eigen::Map<const RowMajorMat<Scalar>> R(r.data(), subjects(), J_);
            return R.transpose() * X_.col(i);
        }
        scratch_rows_.resize(rows());
        for (Index n = 0; n < subjects(); ++n)
            scratch_rows_.segment(offsets_[n], subject_rows(n)) =
                X_(n, i) * r.segment(offsets_[n], subject_rows(n));
        return E_stack_.transpose() * scratch_rows_;
    }

    /// I x J matrix whose row i is A_i^T r; one GEMM for the full sweep.
    Mat<Scalar> all_group_gradients(const Vec<Scalar>& r) const
    {
        if (kind_ == DesignKind::ImplicitKronecker) {
            Eigen::Map<const RowMajorMat<Scalar>> R(r.data(), subjects(), J_);
            return X_.transpose() * R;
        }
        Mat<Scalar> U(subjects(), J_);
        for (Index n = 0; n < subjects(); ++n)
            U.row(n) = (E_stack_.middleRows(offsets_[n], subject_rows(n)).transpose() *
                        r.segment(offsets_[n], subject_rows(n)))
                           .transpose();
        return X_.transpose() * U;
    }

    Scalar group_frob_norm(Index i) const
    {
        if (kind_ == DesignKind::ImplicitKronecker)
            return X_.col(i).norm() * std::sqrt(Scalar(J_));
        return std::sqrt(X_.col(i).array().square().matrix().dot(e_frob_sq_));
    }

    /// ||A_i||_op. Kronecker blocks have A_i^T A_i = ||X^(i)||^2 I; explicit
    /// blocks use power iteration (tol 1e-10, <= 500 iters) on the J x J Gram
    /// A_i^T A_i = sum_n X(n,i)^2 E_n^T E_n.
    Scalar group_op_norm(Index i) const
    {
        if (kind_ == DesignKind::ImplicitKronecker) return X_.col(i).norm();

        Mat<Scalar> M = Mat<Scalar>::Zero(J_, J_);
        for (Index n = 0; n < subjects(); ++n) {
            const Scalar w = X_(n, i) * X_(n, i);
            if (w != Scalar(0)) M += w * subject_grams_[n];
        }
        Vec<Scalar> v = Vec<Scalar>::Ones(J_) / std::sqrt(Scalar(J_));
        Scalar lambda = 0;
        for (int it = 0; it < 500; ++it) {
            Vec<Scalar> w = M * v;
            const Scalar norm = w.norm();
            if (norm == Scalar(0)) return Scalar(0);
            w /= norm;
            const Scalar next = w.dot(M * w);
            const bool done = std::abs(next - lambda) <= Scalar(1e-10) * std::max(next, Scalar(1));
            lambda = next;
            v = w;
            if (done) break;
        }
        return std::sqrt(std::max(lambda, Scalar(0)));
    }

    /// Dense copy of A_i, for small-instance oracles and refits.
    Mat<Scalar> materialize_group(Index i) const
    {
        Mat<Scalar> A = Mat<Scalar>::Zero(rows(), J_);
        if (kind_ == DesignKind::ImplicitKronecker) {
            for (Index n = 0; n < subjects(); ++n)
                A.block(n * J_, 0, J_, J_) =
                    X_(n, i) * Mat<Scalar>::Identity(J_, J_);
            return A;
        }
        for (Index n = 0; n < subjects(); ++n)
            A.middleRows(offsets_[n], subject_rows(n)) =
                X_(n, i) * E_stack_.middleRows(offsets_[n], subject_rows(n));
        return A;
    }

    /// Full dense A = [A_1 ... A_I]; only for tiny instances.
    Mat<Scalar> materialize() const
    {
        Mat<Scalar> A(rows(), group_count() * J_);
        for (Index i = 0; i < group_count(); ++i)
            A.middleCols(i * J_, J_) = materialize_group(i);
        return A;
    }

    /// Restriction to a subject subset (CV folds). Standardization of X is
    /// inherited from the parent, not recomputed per fold.
    GroupDesign subset_subjects(const std::vector<Index>& subject_ids) const
    {
        GroupDesign d;
        d.kind_ = kind_;
        d.J_ = J_;
        const Index n_sub = static_cast<Index>(subject_ids.size());
        require(n_sub > 0, "subset_subjects: empty subset");
        d.X_.resize(n_sub, X_.cols());
        for (Index k = 0; k < n_sub; ++k) d.X_.row(k) = X_.row(subject_ids[k]);

        if (kind_ == DesignKind::ImplicitKronecker) {
            d.y_.resize(n_sub * J_);
            for (Index k = 0; k < n_sub; ++k)
                d.y_.segment(k * J_, J_) = y_.segment(subject_ids[k] * J_, J_);
        } else {
            d.offsets_.assign(static_cast<std::size_t>(n_sub) + 1, 0);
            Index rows = 0;
            for (Index k = 0; k < n_sub; ++k) {
                d.offsets_[k + 1] = d.offsets_[k] + subject_rows(subject_ids[k]);
                rows += subject_rows(subject_ids[k]);
            }
            d.E_stack_.resize(rows, J_);
            d.y_.resize(rows);
            for (Index k = 0; k < n_sub; ++k) {
                const Index n = subject_ids[k];
                d.E_stack_.middleRows(d.offsets_[k], subject_rows(n)) =
                    E_stack_.middleRows(offsets_[n], subject_rows(n));
                d.y_.segment(d.offsets_[k], subject_rows(n)) =
                    y_.segment(offsets_[n], subject_rows(n));
            }
        }
        d.init_caches();
        return d;
    }

  private:
    void init_caches()
    {
        if (kind_ != DesignKind::ExplicitSparse) return;
        const Index N = subjects();
        subject_grams_.resize(N);
        e_frob_sq_.resize(N);
        for (Index n = 0; n < N; ++n) {
            const auto En = E_stack_.middleRows(offsets_[n], subject_rows(n));
            subject_grams_[n] = En.transpose() * En;
            e_frob_sq_[n] = En.squaredNorm();
        }
    }

    DesignKind kind_ = DesignKind::ExplicitSparse;
    Mat<Scalar> X_;
    Mat<Scalar> E_stack_;
    std::vector<Index> offsets_;
    Vec<Scalar> y_;
    Index J_ = 0;

    std::vector<Mat<Scalar>> subject_grams_;
    Vec<Scalar> e_frob_sq_;
    mutable Vec<Scalar> scratch_rows_;
};

using GroupDesignd = GroupDesign<double>;

template <class Scalar>
GroupDesign<Scalar> build_sparse_design(const DesignMatrix<Scalar>& dm,
                                        const std::vector<BasisMatrix<Scalar>>& bases,
                                        const ObservationSet<Scalar>& obs)
{
    return GroupDesign<Scalar>::explicit_sparse(dm, bases, obs);
}

template <class Scalar>
GroupDesign<Scalar> build_dense_design(const DesignMatrix<Scalar>& dm,
                                       const ScoreMatrix<Scalar>& scores)
{
    return GroupDesign<Scalar>::implicit_kronecker(dm, scores.Y_scores);
}

/// ||A_i||_op for every group.
template <class Scalar>
Vec<Scalar> group_gram_diag(const GroupDesign<Scalar>& design)
{
    Vec<Scalar> out(design.group_count());
    for (Index i = 0; i < design.group_count(); ++i) out[i] = design.group_op_norm(i);
    return out;
}

}  // namespace fslasso
