#pragma once

#include <stdexcept>
#include <string>

namespace posekit {

enum class error_code {
    shape,
    out_of_bounds,
    parse,
    precondition,
    ordering,
    behind_camera,
    no_association,
    refinement_degenerate,
    no_consensus,
    geometry_degenerate,
    ambiguity,
    io,
};

const char* to_string(error_code code);

// Process exit status for a failed stage: 3 parse, 4 no-association,
// 5 refinement-degenerate, 6 no-consensus, 7 geometry-degenerate, 1 otherwise.
int exit_status(error_code code);

class error : public std::runtime_error {
public:
    error(error_code code, const std::string& what) : std::runtime_error(what), code_(code) {}

    error_code code() const noexcept { return code_; }

private:
    error_code code_;
};

// Stage failures raised by the pipeline driver; the stage name travels with the code.
class stage_error : public error {
public:
    stage_error(std::string stage, const error& cause)
        : error(cause.code(), stage + ": " + cause.what()), stage_(std::move(stage)) {}

    const std::string& stage() const noexcept { return stage_; }

private:
    std::string stage_;
};

// Thrown when ransac cannot reach min_inliers.
class no_consensus_error : public error {
public:
    no_consensus_error(std::size_t best_inliers, const std::string& what)
        : error(error_code::no_consensus, what), best_inliers_(best_inliers) {}

    std::size_t best_inliers() const noexcept { return best_inliers_; }

private:
    std::size_t best_inliers_;
};

// Near-parallel rays during triangulation; carries the angle between them in radians.
class degenerate_rays_error : public error {
public:
    degenerate_rays_error(double angle, const std::string& what)
        : error(error_code::geometry_degenerate, what), angle_(angle) {}

    double angle() const noexcept { return angle_; }

private:
    double angle_;
};

}  // namespace posekit
