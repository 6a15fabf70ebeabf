#pragma once

#include <string>
#include <vector>

#include "coseg/grid.hpp"

namespace coseg {

struct Point {
    double x = 0.0;
    double y = 0.0;
};

struct Segment {
    Point a, b;
    double length() const;
};

// One lesion's RECIST measurement: major and minor diameter segments on the
// axial slice where the lesion is largest.
struct RecistAnnotation {
    std::string image_id;
    Segment major;
    Segment minor;

    // |major| >= |minor| > 0 and the two segments cross (within tolerance,
    // in pixels, measured as the gap between the segments at their closest
    // approach).
    void validate(double cross_tolerance = 2.0) const;
};

struct GrabcutConfig {
    int gmm_components = 5;
    int grabcut_iterations = 5;
    double smoothness_gamma = 50.0;
    double fg_seed_shrink = 0.8;   // scale factor of the DefiniteFG quad, in (0,1]
    int bbox_expand = 20;          // pixels added around the endpoint bbox
    int neighbor_system = 8;       // 4 or 8
    int gmm_em_iterations = 10;

    void validate() const;
};

// DefiniteFG: the endpoint quadrilateral shrunk toward its centroid by
// fg_seed_shrink. ProbableFG: the unshrunk quadrilateral. DefiniteBG:
// outside the endpoint bounding box expanded by bbox_expand. ProbableBG:
// the remainder. Throws "annotation out of bounds" / "degenerate RECIST".
Trimap trimap_from_recist(const RecistAnnotation& ann, int width, int height,
                          const GrabcutConfig& cfg);

// CSV rows: image_path, lesion_id, x11,y11,x12,y12 (major), x21,y21,x22,y22
// (minor). A header row is detected and skipped.
struct RecistRecord {
    std::string image_path;
    std::string lesion_id;
    RecistAnnotation annotation;
};
std::vector<RecistRecord> read_recist_csv(const std::string& path);
void write_recist_csv(const std::string& path, const std::vector<RecistRecord>& records);

}  // namespace coseg
