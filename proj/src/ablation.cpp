// SPDX-License-Identifier: Apache-2.0
#include "dmsr/ablation.hpp"

#include "dmsr/config.hpp"
#include "dmsr/error.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <sstream>

namespace dmsr {

namespace {

std::string fixed(double v, int digits) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

}  // namespace

std::vector<std::pair<std::string, TrainConfig>> ablation_configs(const TrainConfig& base) {
    std::vector<std::pair<std::string, TrainConfig>> out;
    TrainConfig full = base;
    full.disable_saliency = false;
    full.disable_manifold = false;
    out.emplace_back("full", full);
    TrainConfig no_saliency = full;
    no_saliency.disable_saliency = true;
    out.emplace_back("no_saliency", no_saliency);
    TrainConfig no_manifold = full;
    no_manifold.disable_manifold = true;
    out.emplace_back("no_manifold", no_manifold);
    for (auto& [name, config] : out) {
        if (!base.output_dir.empty()) config.output_dir = (std::filesystem::path(base.output_dir) / name).string();
    }
    return out;
}

AblationTable run_ablation(const TrainConfig& base, const DynamicDataset& dataset) {
    AblationTable table;
    for (auto& [name, config] : ablation_configs(base)) {
        Trainer trainer(config, dataset);
        table.rows.push_back({name, trainer.run()});
    }
    return table;
}

double AblationTable::full_margin() const {
    if (rows.size() < 2) fail(ErrorKind::State, "ablation table needs the full row and at least one ablation");
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 1; i < rows.size(); ++i) best = std::max(best, rows[i].summary.final_psnr);
    return rows[0].summary.final_psnr - best;
}

std::string AblationTable::to_text() const {
    const char* header[] = {"config", "psnr", "ssim", "train_s", "net_evals", "gaussians", "frozen", "s_to_target"};
    std::vector<std::vector<std::string>> cells;
    cells.emplace_back(std::begin(header), std::end(header));
    for (const auto& r : rows) {
        const auto& s = r.summary;
        cells.push_back({r.name, fixed(s.final_psnr, 2), fixed(s.final_ssim, 4), fixed(s.train_ms / 1000.0, 1),
                         std::to_string(s.network_evaluations), std::to_string(s.gaussians), std::to_string(s.frozen),
                         s.ms_to_target ? fixed(*s.ms_to_target / 1000.0, 1) : "-"});
    }
    std::vector<std::size_t> width(cells.front().size(), 0);
    for (const auto& row : cells)
        for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
    std::ostringstream out;
    for (const auto& row : cells) {
        for (std::size_t c = 0; c < row.size(); ++c) {
            if (c) out << "  ";
            const std::string pad(width[c] - row[c].size(), ' ');
            out << (c == 0 ? row[c] + pad : pad + row[c]);
        }
        out << '\n';
    }
    return out.str();
}

std::string AblationTable::to_csv() const {
    std::ostringstream out;
    out << "config,psnr,ssim,train_ms,network_evals,gaussians,frozen,ms_to_target\n";
    for (const auto& r : rows) {
        const auto& s = r.summary;
        out << r.name << ',' << format_double(s.final_psnr) << ',' << format_double(s.final_ssim) << ','
            << format_double(s.train_ms) << ',' << s.network_evaluations << ',' << s.gaussians << ',' << s.frozen << ','
            << (s.ms_to_target ? format_double(*s.ms_to_target) : "") << '\n';
    }
    return out.str();
}

}  // namespace dmsr
