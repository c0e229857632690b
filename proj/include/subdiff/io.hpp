#pragma once

#include "subdiff/errors.hpp"
#include "subdiff/fdm.hpp"
#include "subdiff/inverse.hpp"
#include "subdiff/neural_field.hpp"
#include "subdiff/training.hpp"

#include <array>
#include <bit>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

namespace subdiff {

static_assert(std::endian::native == std::endian::little, "binary formats are written little-endian");

namespace io_detail {

template <class T>
void put(std::ostream& os, T v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <class T>
T get(std::istream& is, const std::string& what) {
    T v{};
    if (!is.read(reinterpret_cast<char*>(&v), sizeof v)) throw FormatError("truncated file while reading " + what);
    return v;
}

inline void put_string(std::ostream& os, const std::string& s) {
    put<std::uint32_t>(os, static_cast<std::uint32_t>(s.size()));
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string get_string(std::istream& is, const std::string& what) {
    const auto n = get<std::uint32_t>(is, what);
    if (n > (1u << 20)) throw FormatError("implausible string length in " + what);
    std::string s(n, '\0');
    if (n && !is.read(s.data(), n)) throw FormatError("truncated file while reading " + what);
    return s;
}

inline void put_doubles(std::ostream& os, const double* p, std::size_t n) {
    os.write(reinterpret_cast<const char*>(p), static_cast<std::streamsize>(n * sizeof(double)));
}

inline void get_doubles(std::istream& is, double* p, std::size_t n, const std::string& what) {
    if (!is.read(reinterpret_cast<char*>(p), static_cast<std::streamsize>(n * sizeof(double))))
        throw FormatError("truncated payload in " + what);
}

inline void expect_magic(std::istream& is, const std::array<char, 8>& magic, const std::string& what) {
    std::array<char, 8> got{};
    if (!is.read(got.data(), 8) || got != magic) throw FormatError(what + ": bad magic, not a " + what + " file");
}

inline std::ofstream open_out(const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream os(path, std::ios::binary);
    if (!os) throw FormatError("cannot write '" + path.string() + "'");
    return os;
}

inline std::ifstream open_in(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError("cannot read '" + path.string() + "'");
    return is;
}

}  // namespace io_detail

// ---------------------------------------------------------------- checkpoints

inline constexpr std::array<char, 8> kCheckpointMagic{'S', 'D', 'F', 'N', 'E', 'T', '\0', '\0'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

/// A network plus the window it was trained for; nilt refuses times outside it.
struct Checkpoint {
    NeuralField net;
    TimeWindow window;
    int stehfest_terms = 4;
};

/// Layout in docs/formats.md.
inline void write_checkpoint(std::ostream& os, const Checkpoint& ck) {
    using namespace io_detail;
    const NeuralField& net = ck.net;
    os.write(kCheckpointMagic.data(), 8);
    put<std::uint32_t>(os, kCheckpointVersion);
    put<std::uint32_t>(os, static_cast<std::uint32_t>(net.spatial_dim()));
    put<std::uint8_t>(os, net.laplace_input() ? 1 : 0);
    const std::vector<int>& hidden = net.architecture().hidden;
    put<std::uint32_t>(os, static_cast<std::uint32_t>(hidden.size()));
    for (int w : hidden) put<std::uint32_t>(os, static_cast<std::uint32_t>(w));
    put_string(os, NeuralField::kActivation);
    put<std::uint64_t>(os, net.seed());
    put<double>(os, ck.window.t1);
    put<double>(os, ck.window.final_time);
    put<std::uint32_t>(os, static_cast<std::uint32_t>(ck.stehfest_terms));
    put<std::uint64_t>(os, static_cast<std::uint64_t>(net.num_parameters()));
    put_doubles(os, net.parameters().data(), static_cast<std::size_t>(net.num_parameters()));
    if (!os) throw FormatError("checkpoint: write failed");
}

inline Checkpoint read_checkpoint(std::istream& is) {
    using namespace io_detail;
    const std::string what = "checkpoint";
    expect_magic(is, kCheckpointMagic, what);
    const auto version = get<std::uint32_t>(is, what);
    if (version != kCheckpointVersion) throw FormatError("checkpoint: unsupported version " + std::to_string(version));
    NeuralField::Architecture arch;
    arch.spatial_dim = static_cast<int>(get<std::uint32_t>(is, what));
    arch.laplace_input = get<std::uint8_t>(is, what) != 0;
    const auto layers = get<std::uint32_t>(is, what);
    if (layers > 1024) throw FormatError("checkpoint: implausible layer count");
    for (std::uint32_t i = 0; i < layers; ++i) arch.hidden.push_back(static_cast<int>(get<std::uint32_t>(is, what)));
    const std::string act = get_string(is, what);
    if (act != NeuralField::kActivation) throw FormatError("checkpoint: unsupported activation '" + act + "'");
    const auto seed = get<std::uint64_t>(is, what);
    Checkpoint ck{NeuralField(arch, seed), {}, 4};
    ck.window.t1 = get<double>(is, what);
    ck.window.final_time = get<double>(is, what);
    ck.stehfest_terms = static_cast<int>(get<std::uint32_t>(is, what));
    const auto n = get<std::uint64_t>(is, what);
    if (n != static_cast<std::uint64_t>(ck.net.num_parameters()))
        throw FormatError("checkpoint: parameter count " + std::to_string(n) + " does not match the architecture");
    get_doubles(is, ck.net.parameters().data(), n, what);
    return ck;
}

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
    auto os = io_detail::open_out(path);
    write_checkpoint(os, ck);
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
    auto is = io_detail::open_in(path);
    return read_checkpoint(is);
}

// ---------------------------------------------------------------- grid files

inline constexpr std::array<char, 8> kGridMagic{'S', 'D', 'G', 'R', 'I', 'D', '\0', '\0'};
inline constexpr std::uint32_t kGridVersion = 1;

/// Uniform axis: `count` nodes from lower to upper inclusive.
struct GridAxis {
    std::string name;
    std::uint64_t count = 0;
    double lower = 0.0;
    double upper = 1.0;

    [[nodiscard]] double node(std::uint64_t i) const {
        return count == 1 ? lower : lower + (upper - lower) * static_cast<double>(i) / static_cast<double>(count - 1);
    }

    friend bool operator==(const GridAxis&, const GridAxis&) = default;
};

/// Values on a tensor grid; the first axis varies fastest.
struct GridData {
    std::vector<GridAxis> axes;
    std::vector<double> values;

    [[nodiscard]] std::size_t size() const {
        std::size_t n = 1;
        for (const GridAxis& a : axes) n *= a.count;
        return n;
    }
};

inline void write_grid(std::ostream& os, const GridData& g) {
    using namespace io_detail;
    if (g.values.size() != g.size()) throw ContractViolation("write_grid: payload size does not match the axes");
    os.write(kGridMagic.data(), 8);
    put<std::uint32_t>(os, kGridVersion);
    put<std::uint32_t>(os, static_cast<std::uint32_t>(g.axes.size()));
    for (const GridAxis& a : g.axes) {
        put_string(os, a.name);
        put<std::uint64_t>(os, a.count);
        put<double>(os, a.lower);
        put<double>(os, a.upper);
    }
    put<std::uint64_t>(os, g.values.size());
    put_doubles(os, g.values.data(), g.values.size());
    if (!os) throw FormatError("grid: write failed");
}

inline GridData read_grid(std::istream& is) {
    using namespace io_detail;
    const std::string what = "grid";
    expect_magic(is, kGridMagic, what);
    const auto version = get<std::uint32_t>(is, what);
    if (version != kGridVersion) throw FormatError("grid: unsupported version " + std::to_string(version));
    const auto naxes = get<std::uint32_t>(is, what);
    if (naxes > 16) throw FormatError("grid: implausible axis count");
    GridData g;
    for (std::uint32_t i = 0; i < naxes; ++i) {
        GridAxis a;
        a.name = get_string(is, what);
        a.count = get<std::uint64_t>(is, what);
        a.lower = get<double>(is, what);
        a.upper = get<double>(is, what);
        g.axes.push_back(a);
    }
    const auto n = get<std::uint64_t>(is, what);
    if (n != g.size()) throw FormatError("grid: payload count does not match the axes");
    g.values.resize(n);
    get_doubles(is, g.values.data(), n, what);
    return g;
}

inline void save_grid(const std::filesystem::path& path, const GridData& g) {
    auto os = io_detail::open_out(path);
    write_grid(os, g);
}

inline GridData load_grid(const std::filesystem::path& path) {
    auto is = io_detail::open_in(path);
    return read_grid(is);
}

/// Full space-time history of an FDM solve, axes (x, y, ..., t).
inline GridData history_grid(const FieldHistory& h) {
    static constexpr const char* names[] = {"x", "y", "z"};
    GridData g;
    const Grid& grid = h.grid;
    for (int k = 0; k < grid.dim(); ++k)
        g.axes.push_back({names[k], static_cast<std::uint64_t>(grid.nodes(k)), grid.box().lower[k], grid.box().upper[k]});
    g.axes.push_back({"t", static_cast<std::uint64_t>(grid.time_levels()), 0.0, grid.final_time()});
    g.values = h.values;
    return g;
}

// ---------------------------------------------------------------- CSV

/// Comma-separated numeric table with a header row; numbers use the shortest round-trip form.
class CsvWriter {
public:
    CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header)
        : os_(io_detail::open_out(path)), columns_(header.size()) {
        for (std::size_t i = 0; i < header.size(); ++i) os_ << (i ? "," : "") << header[i];
        os_ << '\n';
    }

    void row(std::initializer_list<double> values) { row(std::vector<double>(values)); }

    void row(const std::vector<double>& values) {
        if (values.size() != columns_) throw ContractViolation("CsvWriter: row width does not match the header");
        std::string line;
        char buf[64];
        for (std::size_t i = 0; i < values.size(); ++i) {
            if (i) line += ',';
            const auto r = std::to_chars(buf, buf + sizeof buf, values[i]);
            line.append(buf, r.ptr);
        }
        line += '\n';
        os_ << line;
    }

    void close() {
        os_.close();
        if (!os_) throw FormatError("CsvWriter: write failed");
    }

private:
    std::ofstream os_;
    std::size_t columns_;
};

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<double>> rows;

    [[nodiscard]] std::size_t column(const std::string& name) const {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (header[i] == name) return i;
        throw ContractViolation("CsvTable: no column '" + name + "'");
    }
};

inline CsvTable read_csv(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw FormatError("cannot read '" + path.string() + "'");
    CsvTable t;
    std::string line;
    if (!std::getline(is, line)) throw FormatError(path.string() + ": empty CSV");
    std::size_t start = 0;
    for (std::size_t i = 0; i <= line.size(); ++i)
        if (i == line.size() || line[i] == ',') {
            t.header.push_back(line.substr(start, i - start));
            start = i + 1;
        }
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::vector<double> row;
        const char* p = line.data();
        const char* end = p + line.size();
        while (p <= end) {
            double v = 0.0;
            const auto r = std::from_chars(p, end, v);
            if (r.ec != std::errc()) throw FormatError(path.string() + ": bad number in '" + line + "'");
            row.push_back(v);
            p = r.ptr + 1;
        }
        if (row.size() != t.header.size()) throw FormatError(path.string() + ": ragged row");
        t.rows.push_back(std::move(row));
    }
    return t;
}

inline void write_loss_history(const std::filesystem::path& path, const std::vector<LossRecord>& history, bool inverse) {
    std::vector<std::string> header{"iteration", "L_eq", "L_bd"};
    if (inverse) {
        header.push_back("L_obs");
        header.push_back("L_prior");
    }
    header.push_back("total");
    CsvWriter csv(path, header);
    for (const LossRecord& r : history) {
        if (inverse)
            csv.row({static_cast<double>(r.iteration), r.equation, r.boundary, r.observation, r.prior, r.total});
        else
            csv.row({static_cast<double>(r.iteration), r.equation, r.boundary, r.total});
    }
    csv.close();
}

/// Columns i, mu_i for one rule.
inline void write_stehfest_csv(const std::filesystem::path& path, int m) {
    const StehfestRule rule(m);
    CsvWriter csv(path, {"i", "mu"});
    for (int i = 0; i < m; ++i) csv.row({static_cast<double>(i + 1), rule.coefficients()[i]});
    csv.close();
}

// ---------------------------------------------------------------- measurements

/// Columns x_1..x_d, s, h.
inline void write_measurements(const std::filesystem::path& path, const MeasurementSet& m) {
    static constexpr const char* names[] = {"x", "y", "z"};
    const auto d = m.x.rows();
    std::vector<std::string> header;
    for (Eigen::Index k = 0; k < d; ++k) header.emplace_back(names[k]);
    header.emplace_back("s");
    header.emplace_back("h");
    CsvWriter csv(path, header);
    std::vector<double> row(static_cast<std::size_t>(d + 2));
    for (Eigen::Index i = 0; i < m.x.cols(); ++i) {
        for (Eigen::Index k = 0; k < d; ++k) row[static_cast<std::size_t>(k)] = m.x(k, i);
        row[static_cast<std::size_t>(d)] = m.s(i);
        row[static_cast<std::size_t>(d + 1)] = m.h(i);
        csv.row(row);
    }
    csv.close();
}

inline MeasurementSet read_measurements(const std::filesystem::path& path) {
    const CsvTable t = read_csv(path);
    if (t.header.size() < 3 || t.header[t.header.size() - 2] != "s" || t.header.back() != "h")
        throw FormatError(path.string() + ": expected columns x.., s, h");
    const auto d = static_cast<Eigen::Index>(t.header.size() - 2);
    const auto n = static_cast<Eigen::Index>(t.rows.size());
    MeasurementSet m;
    m.x.resize(d, n);
    m.s.resize(n);
    m.h.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& r = t.rows[static_cast<std::size_t>(i)];
        for (Eigen::Index k = 0; k < d; ++k) m.x(k, i) = r[static_cast<std::size_t>(k)];
        m.s(i) = r[static_cast<std::size_t>(d)];
        m.h(i) = r[static_cast<std::size_t>(d + 1)];
    }
    return m;
}

}  // namespace subdiff
