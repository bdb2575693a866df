// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "dmsr/scene.hpp"
#include "dmsr/trainer.hpp"

#include <string>
#include <utility>
#include <vector>

namespace dmsr {

struct AblationRow {
    std::string name;
    TrainSummary summary;
};

struct AblationTable {
    std::vector<AblationRow> rows;  // rows[0] is the full configuration

    // Aligned plain-text table.
    std::string to_text() const;
    std::string to_csv() const;
    // Full PSNR minus the best ablated PSNR.
    double full_margin() const;
};

// full, no_saliency, no_manifold; each writes to <output_dir>/<name> when
// the base config has an output directory.
std::vector<std::pair<std::string, TrainConfig>> ablation_configs(const TrainConfig& base);

AblationTable run_ablation(const TrainConfig& base, const DynamicDataset& dataset);

}  // namespace dmsr
