#pragma once

#include <cstdint>
#include <random>

#include "cbct/volume.hpp"

namespace cbct {

/// The one seeded generator behind every randomized input.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

    double uniform(double lo = 0.0, double hi = 1.0) { return std::uniform_real_distribution<double>(lo, hi)(engine_); }
    double normal(double mean = 0.0, double sigma = 1.0) { return std::normal_distribution<double>(mean, sigma)(engine_); }
    Index integer(Index lo, Index hi) { return std::uniform_int_distribution<Index>(lo, hi)(engine_); }

    void fill_uniform(Buffer& data, float lo = 0.0f, float hi = 1.0f)
    {
        std::uniform_real_distribution<float> dist(lo, hi);
        for (Index i = 0; i < data.size(); ++i)
            data[i] = dist(engine_);
    }

    void add_noise(Buffer& data, double sigma)
    {
        std::normal_distribution<double> dist(0.0, sigma);
        for (Index i = 0; i < data.size(); ++i)
            data[i] = static_cast<float>(data[i] + dist(engine_));
    }

    std::mt19937_64& engine() { return engine_; }

private:
    std::mt19937_64 engine_;
};

}  // namespace cbct
