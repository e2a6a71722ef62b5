#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace steer {

enum class Task { Regression, BinaryClassification };

std::string_view ToString(Task task);
Task ParseTask(std::string_view text);

enum class HeaderMode { Auto, Present, Absent };

// Rectangular numeric table, label in the last column.
struct Table {
    Eigen::MatrixXd features;
    Eigen::ArrayXd labels;
    std::vector<std::string> names; // empty when the file had no header
};

// Throws Error(Data) on non-numeric cells, ragged rows, or fewer than 10 rows.
Table ReadCsv(const std::filesystem::path& path, HeaderMode header = HeaderMode::Auto);
Table ParseCsv(std::string_view text, HeaderMode header = HeaderMode::Auto);

inline constexpr double kTrainFraction = 0.7;

struct Dataset {
    std::string name;
    Task task = Task::Regression;
    std::uint64_t seed = 0;

    std::vector<std::size_t> train_rows;
    std::vector<std::size_t> test_rows;

    // z-scored with training-split statistics
    Eigen::MatrixXd x_train;
    Eigen::MatrixXd x_test;
    Eigen::ArrayXd y_train;
    Eigen::ArrayXd y_test;

    Eigen::VectorXd column_mean;
    Eigen::VectorXd column_std; // 0 for constant columns

    std::size_t Rows() const { return train_rows.size() + test_rows.size(); }
    std::size_t Dims() const { return static_cast<std::size_t>(x_train.cols()); }
};

// Seeded 70/30 split followed by z-scoring fitted on the training rows only.
// Binary classification labels are mapped to {0, 1} (lower value -> 0).
Dataset MakeDataset(const Table& table, Task task, std::uint64_t seed, std::string name = {});
Dataset LoadDataset(const std::filesystem::path& path, Task task, std::uint64_t seed);

// Regression: mean squared error. Classification: fraction of rows where
// (pred >= 0.5) disagrees with the {0,1} label.
double ErrorMetric(Task task, const Eigen::ArrayXd& pred_scaled, const Eigen::ArrayXd& y);

} // namespace steer
