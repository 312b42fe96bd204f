#include "bsdelab/philox.hpp"

#include <boost/math/special_functions/erf.hpp>

#include <cmath>

namespace bsdelab {

double inverse_normal_cdf(double u) {
    return -std::sqrt(2.0) * boost::math::erfc_inv(2.0 * u);
}

double path_normal(std::uint64_t seed, std::uint64_t path, std::uint64_t j) {
    // One Philox block yields two uniforms, hence two normals.
    const Philox4x32::Counter ctr = {static_cast<std::uint32_t>(j >> 1),
                                     static_cast<std::uint32_t>(path),
                                     static_cast<std::uint32_t>(path >> 32),
                                     static_cast<std::uint32_t>(j >> 33)};
    const Philox4x32::Key key = {static_cast<std::uint32_t>(seed),
                                 static_cast<std::uint32_t>(seed >> 32)};
    const auto out = Philox4x32::block(ctr, key);
    const double u = (j & 1u) == 0 ? uniform_open01(out[0], out[1]) : uniform_open01(out[2], out[3]);
    return inverse_normal_cdf(u);
}

}  // namespace bsdelab
