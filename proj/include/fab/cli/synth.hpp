#pragma once

// Synthetic schools-by-students data with the shapes of a large education
// survey: many small groups, a 4-category factor coded as 3 dummies, other
// covariates to be projected out, and group-specific noise variances.

#include <cstdint>
#include <string>
#include <vector>

#include "fab/linalg.hpp"

namespace fab::cli {

struct SynthOptions {
    Index groups = 751;
    Index small_groups = 34;  // groups with 7 to 9 rows
    double mean_size = 20.45;  // over all groups
    std::uint64_t seed = 20240601;
    Vector beta0 = (Vector(3) << -0.45, -0.35, 0.15).finished();
    Vector psi_diag = Vector::Constant(3, 0.04);
    double sigma0sq = 0.5;  // sigma_j^2 = sigma0sq |z_j|, z_j ~ N(tn_mu, tn_sd^2)
    double tn_mu = 1.0;
    double tn_sd = 0.35;
};

// Focal columns and nuisance columns of the generated file.
const std::vector<std::string>& synth_focal_columns();
const std::vector<std::string>& synth_nuisance_columns();

// CSV text with header group,y,<focal>,<nuisance>.
std::string synth_csv(const SynthOptions& opt);

// Config text that tests the generated file.
std::string synth_config(const std::string& data_path);

}  // namespace fab::cli
