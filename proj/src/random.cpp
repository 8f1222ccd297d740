#include "fab/random.hpp"

#include <boost/random/normal_distribution.hpp>
#include <boost/random/uniform_int_distribution.hpp>

#include <cstring>

namespace fab {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::uint64_t mix_keys(std::uint64_t a, std::uint64_t b) {
    return splitmix64(splitmix64(a) ^ (b + 0x632be59bd9b4e019ULL + (a << 6) + (a >> 2)));
}

std::uint64_t hash_string(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::uint64_t hash_doubles(std::span<const double> values) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (double v : values) {
        if (v == 0.0) v = 0.0;  // fold -0 into +0
        std::uint64_t bits = 0;
        std::memcpy(&bits, &v, sizeof bits);
        h = mix_keys(h, bits);
    }
    return h;
}

std::mt19937_64 block_engine(std::uint64_t seed, std::uint64_t key, std::uint64_t block) {
    const std::uint64_t words[3] = {seed, key, block};
    std::uint32_t parts[6];
    for (int i = 0; i < 3; ++i) {
        parts[2 * i] = static_cast<std::uint32_t>(words[i]);
        parts[2 * i + 1] = static_cast<std::uint32_t>(words[i] >> 32);
    }
    std::seed_seq seq(std::begin(parts), std::end(parts));
    return std::mt19937_64(seq);
}

void fill_unit_vector(std::mt19937_64& eng, Eigen::Ref<Vector> u) {
    boost::random::normal_distribution<double> normal;
    double norm2 = 0.0;
    do {
        for (Index i = 0; i < u.size(); ++i) u[i] = normal(eng);
        norm2 = u.squaredNorm();
    } while (!(norm2 > 0.0));
    u /= std::sqrt(norm2);
}

void shuffle_indices(std::mt19937_64& eng, std::span<Index> idx) {
    for (std::size_t i = idx.size(); i > 1; --i) {
        boost::random::uniform_int_distribution<std::size_t> pick(0, i - 1);
        std::swap(idx[i - 1], idx[pick(eng)]);
    }
}

}  // namespace fab
