#include "subderm/errors.hpp"
#include "subderm/random.hpp"
#include "subderm/types.hpp"

#include <cmath>
#include <numbers>

namespace subderm {

const char* to_string(ErrorCode code) noexcept
{
    switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::ConfigInvalid: return "ConfigInvalid";
    case ErrorCode::EmptyRegion: return "EmptyRegion";
    case ErrorCode::NoTumor: return "NoTumor";
    case ErrorCode::EmptyAfterFilter: return "EmptyAfterFilter";
    case ErrorCode::DegenerateCloud: return "DegenerateCloud";
    case ErrorCode::EmptyRoi: return "EmptyRoi";
    case ErrorCode::ResolutionTooCoarse: return "ResolutionTooCoarse";
    case ErrorCode::InvalidCell: return "InvalidCell";
    case ErrorCode::SingularKernel: return "SingularKernel";
    case ErrorCode::Exhausted: return "Exhausted";
    case ErrorCode::FrameMismatch: return "FrameMismatch";
    case ErrorCode::OutOfRange: return "OutOfRange";
    case ErrorCode::NumericalBlowup: return "NumericalBlowup";
    case ErrorCode::NoContact: return "NoContact";
    case ErrorCode::EmptyReconstruction: return "EmptyReconstruction";
    case ErrorCode::EmptyCloud: return "EmptyCloud";
    case ErrorCode::Empty: return "Empty";
    case ErrorCode::IoError: return "IoError";
    }
    return "Unknown";
}

void PointCloud::validate() const
{
    if (normals.empty())
        return;
    if (normals.size() != points.size())
        fail(ErrorCode::InvalidArgument, "normal count differs from point count");
    for (const auto& n : normals) {
        if (std::abs(n.norm() - 1.0) > 1e-6)
            fail(ErrorCode::InvalidArgument, "normal is not unit length");
    }
}

double Rng::normal()
{
    // 1 - u keeps the log argument in (0, 1].
    const double u1 = 1.0 - uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t Rng::index(std::uint64_t n)
{
    if (n == 0)
        fail(ErrorCode::InvalidArgument, "index range must be nonempty");
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    std::uint64_t x = engine_();
    while (x >= limit)
        x = engine_();
    return x % n;
}

namespace {

std::uint64_t splitmix64(std::uint64_t x)
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t index)
{
    return splitmix64(splitmix64(splitmix64(seed) ^ stream) ^ index);
}

}  // namespace subderm
