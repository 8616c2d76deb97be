#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>
#include <vector>

namespace fslasso {

using Index = Eigen::Index;

template <class Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

template <class Scalar>
using RowMajorMat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <class Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using Matd = Mat<double>;
using Vecd = Vec<double>;

/// Numerical failure distinct from bad input (maps to exit code 3 in the CLI).
class numeric_error : public std::runtime_error {
  public:
    explicit numeric_error(const std::string& what) : std::runtime_error(what) {}
};

inline void require(bool cond, const std::string& msg)
{
    if (!cond) throw std::invalid_argument(msg);
}

/// One subject's longitudinal record: time points and matching values.
template <class Scalar>
struct Subject {
    Vec<Scalar> times;
    Vec<Scalar> values;
};

/// Sparse longitudinal data, one entry per subject.
template <class Scalar>
struct ObservationSet {
    std::vector<Subject<Scalar>> subjects;

    Index size() const { return static_cast<Index>(subjects.size()); }

    Index total_obs() const
    {
        Index m = 0;
        for (const auto& s : subjects) m += s.times.size();
        return m;
    }

    void validate() const
    {
        require(!subjects.empty(), "ObservationSet: no subjects");
        for (const auto& s : subjects) {
            require(s.times.size() == s.values.size(),
                    "ObservationSet: times/values length mismatch");
            require(s.times.size() > 0, "ObservationSet: subject with no observations");
            for (Index m = 1; m < s.times.size(); ++m)
                require(s.times[m - 1] <= s.times[m], "ObservationSet: times not sorted");
        }
    }
};

using ObservationSetd = ObservationSet<double>;

}  // namespace fslasso
