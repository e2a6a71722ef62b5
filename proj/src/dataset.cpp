#include "steer/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <optional>
#include <sstream>

#include <fmt/format.h>

#include "steer/common.hpp"

namespace steer {

std::string_view ToString(Task task)
{
    return task == Task::Regression ? "regression" : "classification";
}

Task ParseTask(std::string_view text)
{
    if (text == "regression") {
        return Task::Regression;
    }
    if (text == "classification" || text == "binary_classification") {
        return Task::BinaryClassification;
    }
    throw Error(ErrorCode::InvalidConfig, fmt::format("unknown task '{}' (expected regression|classification)", text));
}

namespace {

    std::string_view Trim(std::string_view s)
    {
        while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '"')) {
            s.remove_prefix(1);
        }
        while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r' || s.back() == '"')) {
            s.remove_suffix(1);
        }
        return s;
    }

    std::vector<std::string_view> SplitCells(std::string_view line)
    {
        std::vector<std::string_view> cells;
        std::size_t start = 0;
        while (true) {
            auto comma = line.find(',', start);
            cells.push_back(Trim(line.substr(start, comma - start)));
            if (comma == std::string_view::npos) {
                break;
            }
            start = comma + 1;
        }
        return cells;
    }

    std::optional<double> ParseNumber(std::string_view cell)
    {
        if (cell.empty()) {
            return std::nullopt;
        }
        if (cell.front() == '+') {
            cell.remove_prefix(1);
        }
        double value = 0.0;
        auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), value);
        if (ec != std::errc {} || ptr != cell.data() + cell.size() || !std::isfinite(value)) {
            return std::nullopt;
        }
        return value;
    }

} // namespace

Table ParseCsv(std::string_view text, HeaderMode header)
{
    std::vector<std::vector<std::string_view>> rows;
    std::size_t start = 0;
    while (start < text.size()) {
        auto nl = text.find('\n', start);
        auto line = text.substr(start, nl == std::string_view::npos ? std::string_view::npos : nl - start);
        start = nl == std::string_view::npos ? text.size() : nl + 1;
        if (Trim(line).empty()) {
            continue;
        }
        rows.push_back(SplitCells(line));
    }
    if (rows.empty()) {
        throw Error(ErrorCode::Data, "empty table");
    }

    Table table;
    bool has_header = header == HeaderMode::Present;
    if (header == HeaderMode::Auto) {
        has_header = std::any_of(rows.front().begin(), rows.front().end(), [](auto c) { return !ParseNumber(c); });
    }
    if (has_header) {
        for (auto c : rows.front()) {
            table.names.emplace_back(c);
        }
        rows.erase(rows.begin());
    }

    const auto width = rows.empty() ? std::size_t { 0 } : rows.front().size();
    if (rows.size() < 10) {
        throw Error(ErrorCode::Data, fmt::format("table has {} data rows; at least 10 are required", rows.size()));
    }
    if (width < 2) {
        throw Error(ErrorCode::Data, "table needs at least one feature column and a label column");
    }
    if (has_header && table.names.size() != width) {
        throw Error(ErrorCode::Data, fmt::format("header has {} columns but data rows have {}", table.names.size(), width));
    }

    const auto n = static_cast<Eigen::Index>(rows.size());
    const auto d = static_cast<Eigen::Index>(width - 1);
    table.features.resize(n, d);
    table.labels.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& row = rows[static_cast<std::size_t>(i)];
        if (row.size() != width) {
            throw Error(ErrorCode::Data, fmt::format("row {} has {} cells, expected {}", i + 1, row.size(), width));
        }
        for (std::size_t j = 0; j < width; ++j) {
            auto value = ParseNumber(row[j]);
            if (!value) {
                throw Error(ErrorCode::Data, fmt::format("row {} column {}: non-numeric cell '{}'", i + 1, j + 1, row[j]));
            }
            if (static_cast<Eigen::Index>(j) < d) {
                table.features(i, static_cast<Eigen::Index>(j)) = *value;
            } else {
                table.labels[i] = *value;
            }
        }
    }
    return table;
}

Table ReadCsv(const std::filesystem::path& path, HeaderMode header)
{
    std::ifstream in(path);
    if (!in) {
        throw Error(ErrorCode::Data, fmt::format("cannot open dataset '{}'", path.string()));
    }
    std::stringstream buffer;
    buffer << in.rdbuf();
    return ParseCsv(buffer.str(), header);
}

Dataset MakeDataset(const Table& table, Task task, std::uint64_t seed, std::string name)
{
    Dataset ds;
    ds.name = std::move(name);
    ds.task = task;
    ds.seed = seed;

    const auto n = static_cast<std::size_t>(table.features.rows());
    const auto d = table.features.cols();

    Eigen::ArrayXd labels = table.labels;
    if (task == Task::BinaryClassification) {
        std::vector<double> distinct(labels.begin(), labels.end());
        std::sort(distinct.begin(), distinct.end());
        distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
        if (distinct.size() != 2) {
            throw Error(ErrorCode::Data, fmt::format("binary classification needs exactly 2 label values, found {}", distinct.size()));
        }
        labels = (labels == distinct[1]).cast<double>();
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    auto rng = SplitRng(seed, 0x5e11u);
    std::shuffle(order.begin(), order.end(), rng);
    auto n_train = static_cast<std::size_t>(std::lround(kTrainFraction * static_cast<double>(n)));
    ds.train_rows.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
    ds.test_rows.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());

    auto gather = [&](const std::vector<std::size_t>& rows, Eigen::MatrixXd& x, Eigen::ArrayXd& y) {
        x.resize(static_cast<Eigen::Index>(rows.size()), d);
        y.resize(static_cast<Eigen::Index>(rows.size()));
        for (std::size_t i = 0; i < rows.size(); ++i) {
            auto r = static_cast<Eigen::Index>(rows[i]);
            x.row(static_cast<Eigen::Index>(i)) = table.features.row(r);
            y[static_cast<Eigen::Index>(i)] = labels[r];
        }
    };
    gather(ds.train_rows, ds.x_train, ds.y_train);
    gather(ds.test_rows, ds.x_test, ds.y_test);

    const double m = static_cast<double>(ds.x_train.rows());
    ds.column_mean = ds.x_train.colwise().mean().transpose();
    ds.column_std.resize(d);
    for (Eigen::Index j = 0; j < d; ++j) {
        double var = (ds.x_train.col(j).array() - ds.column_mean[j]).square().sum() / m;
        double sd = std::sqrt(var);
        ds.column_std[j] = sd > 1e-12 ? sd : 0.0;
    }
    auto standardize = [&](Eigen::MatrixXd& x) {
        for (Eigen::Index j = 0; j < d; ++j) {
            if (ds.column_std[j] == 0.0) {
                x.col(j).setZero();
            } else {
                x.col(j) = ((x.col(j).array() - ds.column_mean[j]) / ds.column_std[j]).matrix();
            }
        }
    };
    standardize(ds.x_train);
    standardize(ds.x_test);
    return ds;
}

Dataset LoadDataset(const std::filesystem::path& path, Task task, std::uint64_t seed)
{
    return MakeDataset(ReadCsv(path), task, seed, path.stem().string());
}

double ErrorMetric(Task task, const Eigen::ArrayXd& pred_scaled, const Eigen::ArrayXd& y)
{
    if (pred_scaled.size() != y.size()) {
        throw Error(ErrorCode::Structural, "prediction and label lengths differ");
    }
    if (y.size() == 0) {
        return 0.0;
    }
    if (task == Task::Regression) {
        return (pred_scaled - y).square().mean();
    }
    auto predicted = (pred_scaled >= 0.5).cast<double>();
    return (predicted != y).cast<double>().mean();
}

} // namespace steer
