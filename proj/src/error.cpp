#include "posekit/error.hpp"

namespace posekit {

const char* to_string(error_code code) {
    switch (code) {
        case error_code::shape: return "shape";
        case error_code::out_of_bounds: return "out_of_bounds";
        case error_code::parse: return "parse";
        case error_code::precondition: return "precondition";
        case error_code::ordering: return "ordering";
        case error_code::behind_camera: return "behind_camera";
        case error_code::no_association: return "no_association";
        case error_code::refinement_degenerate: return "refinement_degenerate";
        case error_code::no_consensus: return "no_consensus";
        case error_code::geometry_degenerate: return "geometry_degenerate";
        case error_code::ambiguity: return "ambiguity";
        case error_code::io: return "io";
    }
    return "unknown";
}

int exit_status(error_code code) {
    switch (code) {
        case error_code::parse: return 3;
        case error_code::no_association: return 4;
        case error_code::refinement_degenerate: return 5;
        case error_code::no_consensus: return 6;
        case error_code::geometry_degenerate:
        case error_code::ambiguity:
        case error_code::behind_camera: return 7;
        default: return 1;
    }
}

}  // namespace posekit
