// Licensed under the Apache License, Version 2.0. See LICENSE in the project root.
#pragma once

#include <atomic>
#include <chrono>
#include <filesystem>
#include <string>

namespace kpalign::test {

// Unique scratch directory removed on scope exit.
struct TempDir {
    std::filesystem::path path;

    explicit TempDir(const std::string& tag) {
        static std::atomic<uint64_t> counter{0};
        const auto stamp = std::chrono::steady_clock::now().time_since_epoch().count();
        path = std::filesystem::temp_directory_path() /
               ("kpalign-" + tag + "-" + std::to_string(stamp) + "-" + std::to_string(counter.fetch_add(1)));
        std::filesystem::create_directories(path);
    }

    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path, ec);
    }

    std::filesystem::path operator/(const std::string& name) const { return path / name; }
};

}  // namespace kpalign::test
