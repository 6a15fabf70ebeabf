#pragma once

#include <string>
#include <vector>

#include "coseg/grid.hpp"
#include "coseg/recist.hpp"
#include "coseg/rng.hpp"

namespace coseg {

// One appearance class of synthetic lesions: elliptical blobs with an
// intensity band, texture noise and a background pattern, standing in for
// a cluster of real CT lesions.
struct PhantomArchetype {
    std::string name;
    double axis_min = 10.0;        // semi-axis range, pixels
    double axis_max = 22.0;
    double lesion_intensity = 0.8;
    double background_intensity = 0.2;
    double texture_noise = 0.02;
    double background_blob_contrast = 0.0;  // distractor blob strength
};

struct PhantomSpec {
    int lesion_count = 200;
    int image_size = 96;
    std::vector<PhantomArchetype> archetypes;  // defaults: 4 classes
    std::uint64_t seed = 0;

    void validate() const;
};

PhantomSpec default_phantom_spec();

struct PhantomCase {
    std::string lesion_id;
    int archetype = 0;
    ImageGrid image;
    BinaryMask gt_mask;
    RecistAnnotation annotation;
};

// RECIST derivation from the rendered ground truth: major axis = longest
// chord of the region (exhaustive search over boundary pixels), minor =
// longest chord perpendicular to it that crosses the major segment.
RecistAnnotation recist_from_mask(const BinaryMask& mask, const std::string& lesion_id);

std::vector<PhantomCase> phantom_generate(const PhantomSpec& spec);

}  // namespace coseg
