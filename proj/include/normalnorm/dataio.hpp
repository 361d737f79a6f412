#ifndef NORMALNORM_DATAIO_HPP
#define NORMALNORM_DATAIO_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "normalnorm/mlp.hpp"
#include "normalnorm/tensor.hpp"

namespace normalnorm {

// Plain numeric CSV with a mandatory header row.
struct CsvTable {
    std::vector<std::string> names;
    std::vector<std::vector<double>> columns;
    std::int64_t rows() const {
        return columns.empty() ? 0 : static_cast<std::int64_t>(columns[0].size());
    }
    int find(const std::string& name) const; // -1 when missing
};

CsvTable read_csv(const std::string& path);
void write_csv(const std::string& path, const CsvTable& table);

// The label column is named "label"; all other columns are features.
Dataset dataset_from_csv(const CsvTable& table);
CsvTable csv_from_dataset(const Dataset& ds);

// IDX, big-endian magics 0x00000803 (u8 images) / 0x00000801 (u8 labels).
// Pixels are scaled to [0, 1].
Tensor read_idx_images(const std::string& path);   // (n, rows*cols)
std::vector<int> read_idx_labels(const std::string& path);
void write_idx_images(const std::string& path, const std::vector<std::uint8_t>& pixels,
                      std::int64_t n, std::int64_t rows, std::int64_t cols);
void write_idx_labels(const std::string& path, const std::vector<std::uint8_t>& labels);

Dataset load_idx_dataset(const std::string& images_path, const std::string& labels_path);

} // namespace normalnorm

#endif
