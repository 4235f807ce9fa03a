#pragma once

#include <string>
#include <vector>

namespace s4mtl {

// Deterministic float formatting: identical doubles always serialize to
// identical bytes, which is what the reproducibility contracts on
// history.csv / test_metrics.csv rest on.
std::string fmt_num(double v);

std::string join_csv(const std::vector<std::string>& fields);

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    int col(const std::string& name) const;  // -1 when absent
};

CsvTable read_csv(const std::string& path);
void write_csv(const std::string& path, const CsvTable& table);

// Whole-file helpers used by the run artifacts.
void write_text_file(const std::string& path, const std::string& content);
std::string read_text_file(const std::string& path);

}  // namespace s4mtl
