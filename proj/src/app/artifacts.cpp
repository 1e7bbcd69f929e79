#include "artifacts.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace rspde::app {

namespace {

std::string number(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::ifstream open_for_read(const fs::path& file) {
    std::ifstream in(file);
    if (!in) throw ArtifactError("missing artifact " + file.string());
    return in;
}

/// Reads the hash line and the header of a CSV and returns the data lines.
std::vector<std::vector<double>> read_csv(const fs::path& file, const std::string& hash, std::size_t columns) {
    auto in = open_for_read(file);
    std::string line;
    if (!std::getline(in, line) || line.rfind("# config_hash: ", 0) != 0)
        throw ArtifactError(file.string() + " has no config hash line", "malformed-artifact");
    if (line.substr(15) != hash)
        throw ArtifactError(file.string() + " was written for config " + line.substr(15) + ", not " + hash,
                            "hash-mismatch");
    std::getline(in, line);  // header
    std::vector<std::vector<double>> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<double> row;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
        if (row.size() != columns)
            throw ArtifactError(file.string() + ": row with " + std::to_string(row.size()) + " columns",
                                "malformed-artifact");
        rows.push_back(std::move(row));
    }
    return rows;
}

}  // namespace

std::ofstream open_csv(const fs::path& file, const std::string& hash, const std::string& header) {
    std::ofstream out(file);
    if (!out) throw std::runtime_error("cannot write " + file.string());
    out << "# config_hash: " << hash << '\n' << header << '\n';
    return out;
}

void write_u_csv(const fs::path& file, const std::string& hash, const Grid<double>& grid, const FieldPath<double>& u) {
    const bool two_d = grid.dim() == 2;
    auto out = open_csv(file, hash, two_d ? "step,time,node,x,y,value" : "step,time,node,x,value");
    for (Eigen::Index k = 0; k < u.frames(); ++k) {
        const std::string head = std::to_string(k) + "," + number(u.time(k)) + ",";
        for (Eigen::Index node = 0; node < grid.node_count(); ++node) {
            const auto x = grid.coordinate(node);
            out << head << node << ',' << number(x[0]) << ',';
            if (two_d) out << number(x[1]) << ',';
            out << number(u.data(node, k)) << '\n';
        }
    }
    if (!out) throw std::runtime_error("failed writing " + file.string());
}

void write_measure_csv(const fs::path& file, const std::string& hash, const DiscreteMeasure<double>& m) {
    auto out = open_csv(file, hash, "step,time,node,weight");
    for (Eigen::Index k = 0; k < m.steps(); ++k) {
        const std::string head = std::to_string(k) + "," + number(m.dt * static_cast<double>(k)) + ",";
        for (Eigen::Index p = 0; p < m.grid.interior_count(); ++p)
            out << head << m.grid.interior_nodes()[static_cast<std::size_t>(p)] << ',' << number(m.weights(p, k))
                << '\n';
    }
    if (!out) throw std::runtime_error("failed writing " + file.string());
}

FieldPath<double> read_u_csv(const fs::path& file, const std::string& hash, const Grid<double>& grid, double dt,
                             Eigen::Index steps) {
    const std::size_t cols = grid.dim() == 2 ? 6 : 5;
    const auto rows = read_csv(file, hash, cols);
    if (static_cast<Eigen::Index>(rows.size()) != (steps + 1) * grid.node_count())
        throw ArtifactError(file.string() + " does not match the configured grid and time steps", "malformed-artifact");
    FieldPath<double> u = make_field_path(grid, dt, steps);
    for (const auto& r : rows) {
        const auto k = static_cast<Eigen::Index>(r[0]);
        const auto node = static_cast<Eigen::Index>(r[2]);
        if (k < 0 || k > steps || node < 0 || node >= grid.node_count())
            throw ArtifactError(file.string() + ": index out of range", "malformed-artifact");
        u.data(node, k) = r.back();
    }
    return u;
}

DiscreteMeasure<double> read_measure_csv(const fs::path& file, const std::string& hash, const Grid<double>& grid,
                                         double dt, Eigen::Index steps) {
    const auto rows = read_csv(file, hash, 4);
    if (static_cast<Eigen::Index>(rows.size()) != steps * grid.interior_count())
        throw ArtifactError(file.string() + " does not match the configured grid and time steps", "malformed-artifact");
    auto m = zero_measure(grid, dt, steps);
    for (const auto& r : rows) {
        const auto k = static_cast<Eigen::Index>(r[0]);
        const auto node = static_cast<Eigen::Index>(r[2]);
        if (k < 0 || k >= steps || node < 0 || node >= grid.node_count() || grid.is_boundary(node))
            throw ArtifactError(file.string() + ": index out of range", "malformed-artifact");
        m.weights(grid.interior_position(node), k) = r[3];
    }
    return m;
}

void write_noise_file(const fs::path& file, std::uint64_t hash, const NoisePath<double>& w) {
    write_noise(file.string(), w);
    std::ofstream out(file, std::ios::binary | std::ios::app);
    out.write(reinterpret_cast<const char*>(&hash), sizeof hash);
    if (!out) throw std::runtime_error("failed writing " + file.string());
}

NoisePath<double> read_noise_file(const fs::path& file, std::uint64_t hash) {
    if (!fs::exists(file)) throw ArtifactError("missing artifact " + file.string());
    auto w = read_noise<double>(file.string());
    std::ifstream in(file, std::ios::binary);
    in.seekg(-static_cast<std::streamoff>(sizeof hash), std::ios::end);
    std::uint64_t stored = 0;
    in.read(reinterpret_cast<char*>(&stored), sizeof stored);
    const auto expected_size = 32 + 8 * static_cast<std::uintmax_t>(w.increments.size()) + 8;
    if (!in || fs::file_size(file) != expected_size)
        throw ArtifactError(file.string() + " has no config hash trailer", "malformed-artifact");
    if (stored != hash) throw ArtifactError(file.string() + " was written for another config", "hash-mismatch");
    return w;
}

void write_json(const fs::path& file, const Json& j) {
    std::ofstream out(file);
    if (!out) throw std::runtime_error("cannot write " + file.string());
    out << j.dump(2) << '\n';
}

Json read_json(const fs::path& file) {
    auto in = open_for_read(file);
    try {
        return Json::parse(in);
    } catch (const Json::parse_error& e) {
        throw ArtifactError(file.string() + ": " + e.what(), "malformed-artifact");
    }
}

}  // namespace rspde::app
