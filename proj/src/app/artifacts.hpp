#pragma once

#include "rspde/solver.hpp"

#include <json.hpp>

#include <filesystem>
#include <stdexcept>
#include <string>

namespace rspde::app {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

/// A stored artifact is missing, malformed, or belongs to another config.
class ArtifactError : public std::runtime_error {
public:
    ArtifactError(const std::string& what, std::string status = "missing-artifacts")
        : std::runtime_error(what), status_(std::move(status)) {}
    const std::string& status() const noexcept { return status_; }

private:
    std::string status_;
};

/// u.csv: step,time,node,x[,y],value (all nodes, all frames).
void write_u_csv(const fs::path& file, const std::string& hash, const Grid<double>& grid, const FieldPath<double>& u);
/// measure.csv: step,time,node,weight (interior nodes, one row per step).
void write_measure_csv(const fs::path& file, const std::string& hash, const DiscreteMeasure<double>& m);

FieldPath<double> read_u_csv(const fs::path& file, const std::string& hash, const Grid<double>& grid, double dt,
                             Eigen::Index steps);
DiscreteMeasure<double> read_measure_csv(const fs::path& file, const std::string& hash, const Grid<double>& grid,
                                         double dt, Eigen::Index steps);

/// noise.bin with the 8-byte config hash appended after the payload.
void write_noise_file(const fs::path& file, std::uint64_t hash, const NoisePath<double>& w);
NoisePath<double> read_noise_file(const fs::path& file, std::uint64_t hash);

void write_json(const fs::path& file, const Json& j);
Json read_json(const fs::path& file);

/// Opens a CSV for writing and emits the "# config_hash:" line.
std::ofstream open_csv(const fs::path& file, const std::string& hash, const std::string& header);

}  // namespace rspde::app
