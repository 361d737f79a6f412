#include "normalnorm/dataio.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "normalnorm/errors.hpp"

namespace normalnorm {

int CsvTable::find(const std::string& name) const {
    for (std::size_t i = 0; i < names.size(); ++i) {
        if (names[i] == name) return static_cast<int>(i);
    }
    return -1;
}

CsvTable read_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DomainError("cannot open CSV file: " + path);
    CsvTable table;
    std::string line;
    if (!std::getline(in, line)) throw DomainError("CSV file is empty: " + path);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    {
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) table.names.push_back(cell);
    }
    if (table.names.empty()) throw DomainError("CSV header has no columns: " + path);
    table.columns.assign(table.names.size(), {});
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        std::size_t col = 0;
        while (std::getline(ss, cell, ',')) {
            if (col >= table.names.size()) {
                throw DomainError("CSV row " + std::to_string(line_no) + " has extra columns");
            }
            try {
                std::size_t pos = 0;
                const double v = std::stod(cell, &pos);
                if (pos != cell.size()) throw std::invalid_argument(cell);
                table.columns[col].push_back(v);
            } catch (const std::exception&) {
                throw DomainError("CSV row " + std::to_string(line_no) +
                                  ": cannot parse value '" + cell + "'");
            }
            ++col;
        }
        if (col != table.names.size()) {
            throw DomainError("CSV row " + std::to_string(line_no) + " has missing columns");
        }
    }
    return table;
}

void write_csv(const std::string& path, const CsvTable& table) {
    std::ofstream out(path);
    if (!out) throw DomainError("cannot write CSV file: " + path);
    for (std::size_t i = 0; i < table.names.size(); ++i) {
        out << (i == 0 ? "" : ",") << table.names[i];
    }
    out << "\n";
    const std::int64_t rows = table.rows();
    char buf[64];
    for (std::int64_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < table.columns.size(); ++c) {
            std::snprintf(buf, sizeof(buf), "%.17g",
                          table.columns[c][static_cast<std::size_t>(r)]);
            out << (c == 0 ? "" : ",") << buf;
        }
        out << "\n";
    }
}

Dataset dataset_from_csv(const CsvTable& table) {
    const int label_col = table.find("label");
    if (label_col < 0) throw DomainError("CSV has no 'label' column");
    const std::int64_t n = table.rows();
    if (n == 0) throw DomainError("CSV has no data rows");
    const std::int64_t d = static_cast<std::int64_t>(table.names.size()) - 1;
    if (d == 0) throw DomainError("CSV has no feature columns");

    Dataset ds;
    ds.X = Tensor({n, d});
    ds.labels.resize(static_cast<std::size_t>(n));
    int max_label = 0;
    for (std::int64_t r = 0; r < n; ++r) {
        const double raw = table.columns[static_cast<std::size_t>(label_col)]
                                        [static_cast<std::size_t>(r)];
        const int y = static_cast<int>(std::llround(raw));
        if (y < 0 || std::fabs(raw - y) > 1e-9) {
            throw DomainError("label column must hold non-negative integers");
        }
        ds.labels[static_cast<std::size_t>(r)] = y;
        max_label = std::max(max_label, y);
        std::int64_t fc = 0;
        for (std::size_t c = 0; c < table.columns.size(); ++c) {
            if (static_cast<int>(c) == label_col) continue;
            ds.X.at(r, fc++) = table.columns[c][static_cast<std::size_t>(r)];
        }
    }
    ds.num_classes = max_label + 1;
    return ds;
}

CsvTable csv_from_dataset(const Dataset& ds) {
    CsvTable t;
    for (std::int64_t c = 0; c < ds.dim(); ++c) {
        t.names.push_back("f" + std::to_string(c));
    }
    t.names.push_back("label");
    t.columns.assign(t.names.size(), {});
    for (std::int64_t r = 0; r < ds.n(); ++r) {
        for (std::int64_t c = 0; c < ds.dim(); ++c) {
            t.columns[static_cast<std::size_t>(c)].push_back(ds.X.at(r, c));
        }
        t.columns.back().push_back(static_cast<double>(ds.labels[static_cast<std::size_t>(r)]));
    }
    return t;
}

namespace {

std::uint32_t read_be32(std::istream& in, const std::string& path) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) throw DomainError("truncated IDX file: " + path);
    return (static_cast<std::uint32_t>(b[0]) << 24) |
           (static_cast<std::uint32_t>(b[1]) << 16) |
           (static_cast<std::uint32_t>(b[2]) << 8) | static_cast<std::uint32_t>(b[3]);
}

void write_be32(std::ostream& out, std::uint32_t v) {
    const unsigned char b[4] = {static_cast<unsigned char>(v >> 24),
                                static_cast<unsigned char>(v >> 16),
                                static_cast<unsigned char>(v >> 8),
                                static_cast<unsigned char>(v)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

} // namespace

Tensor read_idx_images(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DomainError("cannot open IDX file: " + path);
    if (read_be32(in, path) != 0x00000803u) {
        throw DomainError("bad IDX image magic in " + path);
    }
    const std::int64_t n = read_be32(in, path);
    const std::int64_t rows = read_be32(in, path);
    const std::int64_t cols = read_be32(in, path);
    Tensor X({n, rows * cols});
    std::vector<unsigned char> buf(static_cast<std::size_t>(rows * cols));
    for (std::int64_t i = 0; i < n; ++i) {
        in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
        if (!in) throw DomainError("truncated IDX file: " + path);
        for (std::int64_t j = 0; j < rows * cols; ++j) {
            X.at(i, j) = static_cast<double>(buf[static_cast<std::size_t>(j)]) / 255.0;
        }
    }
    return X;
}

std::vector<int> read_idx_labels(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DomainError("cannot open IDX file: " + path);
    if (read_be32(in, path) != 0x00000801u) {
        throw DomainError("bad IDX label magic in " + path);
    }
    const std::int64_t n = read_be32(in, path);
    std::vector<int> labels(static_cast<std::size_t>(n));
    for (std::int64_t i = 0; i < n; ++i) {
        const int c = in.get();
        if (c == EOF) throw DomainError("truncated IDX file: " + path);
        labels[static_cast<std::size_t>(i)] = c;
    }
    return labels;
}

void write_idx_images(const std::string& path, const std::vector<std::uint8_t>& pixels,
                      std::int64_t n, std::int64_t rows, std::int64_t cols) {
    if (static_cast<std::int64_t>(pixels.size()) != n * rows * cols) {
        throw std::invalid_argument("pixel buffer does not match n*rows*cols");
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DomainError("cannot write IDX file: " + path);
    write_be32(out, 0x00000803u);
    write_be32(out, static_cast<std::uint32_t>(n));
    write_be32(out, static_cast<std::uint32_t>(rows));
    write_be32(out, static_cast<std::uint32_t>(cols));
    out.write(reinterpret_cast<const char*>(pixels.data()),
              static_cast<std::streamsize>(pixels.size()));
}

void write_idx_labels(const std::string& path, const std::vector<std::uint8_t>& labels) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DomainError("cannot write IDX file: " + path);
    write_be32(out, 0x00000801u);
    write_be32(out, static_cast<std::uint32_t>(labels.size()));
    out.write(reinterpret_cast<const char*>(labels.data()),
              static_cast<std::streamsize>(labels.size()));
}

Dataset load_idx_dataset(const std::string& images_path, const std::string& labels_path) {
    Dataset ds;
    ds.X = read_idx_images(images_path);
    ds.labels = read_idx_labels(labels_path);
    if (static_cast<std::int64_t>(ds.labels.size()) != ds.n()) {
        throw DomainError("IDX image/label counts differ");
    }
    int max_label = 0;
    for (int y : ds.labels) max_label = std::max(max_label, y);
    ds.num_classes = max_label + 1;
    return ds;
}

} // namespace normalnorm
