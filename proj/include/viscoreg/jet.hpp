#pragma once

#include <vector>

#include "viscoreg/common.hpp"

namespace viscoreg {

/// Value, spatial gradient and Laplacian of a scalar field at one point.
struct Jet2 {
    double value = 0.0;
    Vec grad;
    double laplacian = 0.0;

    bool finite() const {
        return std::isfinite(value) && std::isfinite(laplacian) && grad.allFinite();
    }
};

/// Column-major batch of jets: grad is (dim x count).
struct JetBatch {
    RowVec value;
    Mat grad;
    RowVec laplacian;

    Eigen::Index size() const { return value.size(); }

    Jet2 at(Eigen::Index i) const { return Jet2{value(i), grad.col(i), laplacian(i)}; }

    std::vector<Jet2> to_vector() const {
        std::vector<Jet2> out;
        out.reserve(static_cast<std::size_t>(size()));
        for (Eigen::Index i = 0; i < size(); ++i) out.push_back(at(i));
        return out;
    }

    static JetBatch from_vector(const std::vector<Jet2>& jets) {
        JetBatch b;
        const auto n = static_cast<Eigen::Index>(jets.size());
        const Eigen::Index dim = jets.empty() ? 0 : jets.front().grad.size();
        b.value.resize(n);
        b.grad.resize(dim, n);
        b.laplacian.resize(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            const auto& j = jets[static_cast<std::size_t>(i)];
            require(j.grad.size() == dim, "jets of mixed dimension");
            b.value(i) = j.value;
            b.grad.col(i) = j.grad;
            b.laplacian(i) = j.laplacian;
        }
        return b;
    }
};

}  // namespace viscoreg
