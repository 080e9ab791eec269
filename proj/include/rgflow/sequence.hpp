#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "rgflow/errors.hpp"

namespace rgflow {

/// Coordinate classes of an entry x_j = (K_j, g_j, z_j, mu_j).
enum class Coord { K, G, Z, Mu };

/// The three-dimensional coupling state V = (g, z, mu).
struct VTriple {
    double g = 0.0;
    double z = 0.0;
    double mu = 0.0;

    VTriple() = default;
    VTriple(double g_, double z_, double mu_) : g(g_), z(z_), mu(mu_) {}

    VTriple& operator+=(const VTriple& o) { g += o.g; z += o.z; mu += o.mu; return *this; }
    VTriple& operator-=(const VTriple& o) { g -= o.g; z -= o.z; mu -= o.mu; return *this; }
    VTriple& operator*=(double c) { g *= c; z *= c; mu *= c; return *this; }
    friend VTriple operator+(VTriple a, const VTriple& b) { return a += b; }
    friend VTriple operator-(VTriple a, const VTriple& b) { return a -= b; }
    friend VTriple operator*(double c, VTriple v) { return v *= c; }
};

/// A trajectory x_j = (K_j, V_j), j = 0..J, with per-scale K-block dimension.
/// Also used for anything flow-shaped: residuals, tangents, deviations.
class FlowSequence {
public:
    struct Entry {
        std::vector<double> K;
        VTriple V;
    };

    FlowSequence() = default;
    explicit FlowSequence(std::size_t horizon) : entries_(horizon + 1) {}

    std::size_t horizon() const {
        if (entries_.empty()) fail(ErrorCode::InvalidParameters, "empty flow sequence");
        return entries_.size() - 1;
    }
    bool empty() const { return entries_.empty(); }
    std::size_t size() const { return entries_.size(); }

    Entry& operator[](std::size_t j) { return entries_[j]; }
    const Entry& operator[](std::size_t j) const { return entries_[j]; }

    std::vector<Entry>& entries() { return entries_; }
    const std::vector<Entry>& entries() const { return entries_; }

    bool same_shape(const FlowSequence& o) const {
        if (entries_.size() != o.entries_.size()) return false;
        for (std::size_t j = 0; j < entries_.size(); ++j)
            if (entries_[j].K.size() != o.entries_[j].K.size()) return false;
        return true;
    }

    /// Zero sequence with the same K-block shapes as this one.
    FlowSequence zeros_like() const {
        FlowSequence out;
        out.entries_.resize(entries_.size());
        for (std::size_t j = 0; j < entries_.size(); ++j)
            out.entries_[j].K.assign(entries_[j].K.size(), 0.0);
        return out;
    }

    /// this += c * o (shapes must match).
    void axpy(double c, const FlowSequence& o) {
        for (std::size_t j = 0; j < entries_.size(); ++j) {
            Entry& e = entries_[j];
            const Entry& f = o.entries_[j];
            for (std::size_t i = 0; i < e.K.size(); ++i) e.K[i] += c * f.K[i];
            e.V += c * f.V;
        }
    }

    void scale(double c) {
        for (Entry& e : entries_) {
            for (double& k : e.K) k *= c;
            e.V *= c;
        }
    }

    void set_zero() {
        for (Entry& e : entries_) {
            for (double& k : e.K) k = 0.0;
            e.V = VTriple{};
        }
    }

    /// Elementwise max |.|, ignoring weights; cheap sanity metric.
    double sup_abs() const {
        double s = 0.0;
        for (const Entry& e : entries_) {
            for (double k : e.K) s = std::max(s, std::abs(k));
            s = std::max(s, std::abs(e.V.g));
            s = std::max(s, std::abs(e.V.z));
            s = std::max(s, std::abs(e.V.mu));
        }
        return s;
    }

private:
    std::vector<Entry> entries_;
};

inline double sup_norm(const std::vector<double>& k) {
    double s = 0.0;
    for (double v : k) s = std::max(s, std::abs(v));
    return s;
}

} // namespace rgflow
