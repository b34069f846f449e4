#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace provmark {

// Seeded random stream. Transforms (uniform, normal, bounded int) are
// implemented here rather than with std:: distributions so that streams are
// bit-reproducible across standard libraries.
class Rng {
public:
    explicit Rng(uint64_t seed = 0) : engine_(seed) {}

    uint64_t next_u64() { return engine_(); }

    // Uniform in [0, 1) with 53-bit resolution.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Integer in [0, n).
    int64_t below(int64_t n) { return static_cast<int64_t>(engine_() % static_cast<uint64_t>(n)); }

    bool bernoulli(double p) { return uniform() < p; }

    // Standard normal via Box-Muller with a cached spare.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = 1.0 - uniform();  // avoid log(0)
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 6.283185307179586 * u2;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = static_cast<size_t>(below(static_cast<int64_t>(i)));
            std::swap(v[i - 1], v[j]);
        }
    }

    // Derive an independent child stream (e.g. per stage or per epoch).
    Rng fork(uint64_t salt) {
        uint64_t s = next_u64() ^ (salt * 0x9e3779b97f4a7c15ull + 0x2545f4914f6cdd1dull);
        return Rng(s);
    }

    std::string state() const {
        std::ostringstream os;
        os.precision(17);  // full double round-trip for the cached spare
        os << engine_ << " " << (has_spare_ ? 1 : 0) << " " << spare_;
        return os.str();
    }
    void restore(const std::string& s) {
        std::istringstream is(s);
        int flag = 0;
        is >> engine_ >> flag >> spare_;
        has_spare_ = flag != 0;
    }

private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace provmark
