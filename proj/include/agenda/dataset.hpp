#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "agenda/types.hpp"

namespace agenda {

struct RatingTriple {
  UserId user = 0;
  ItemId item = 0;
  double rating = 0.0;

  bool operator==(const RatingTriple&) const = default;
};

/// Ratings with dense 0-based user/item indices and one binary type per user.
///
/// `user_labels` / `item_labels` keep the identifiers of the source file so
/// snapshots can be written back out with their original ids.
struct Dataset {
  std::vector<RatingTriple> ratings;
  std::vector<UserType> types;  // indexed by user id
  int n_users = 0;
  int n_items = 0;
  LabelNames label_names;
  std::vector<std::string> user_labels;
  std::vector<std::string> item_labels;

  bool operator==(const Dataset&) const = default;

  /// Per-user (item, rating) lists, items in file order.
  std::vector<std::vector<std::pair<ItemId, double>>> by_user() const;
  std::vector<int> item_counts() const;
  std::vector<int> user_counts() const;
  /// Throws if any documented invariant is violated.
  void validate() const;
};

enum class Attribute { gender, age };
Attribute parse_attribute(const std::string& s);

/// MovieLens-1M "::" layout. Gender F -> +1, M -> -1; age codes
/// {18,25,35} -> +1, {45,50,56} -> -1, code 1 dropped for the age task.
Dataset parse_movielens(const std::filesystem::path& ratings_path,
                        const std::filesystem::path& users_path, Attribute attribute);

struct CsvSchema {
  std::string user_col = "user";
  std::string item_col = "item";
  std::string rating_col = "rating";
  std::string type_col = "type";
  std::string plus_class = "+1";
  /// Empty: the first non-plus label seen becomes the minus class.
  std::string minus_class = "-1";
  /// When set, types are read from this file (columns user_col, type_col)
  /// instead of the ratings file.
  std::optional<std::filesystem::path> types_path;
};

Dataset parse_csv(const std::filesystem::path& path, const CsvSchema& schema);

/// Writes user,item,rating,type with the original identifiers and label names.
void write_csv(const Dataset& d, const std::filesystem::path& path);

/// Iteratively drops users/items below the thresholds until both hold.
Dataset filter_dataset(const Dataset& d, int min_user_ratings, int min_item_ratings);

struct Fold {
  Dataset train;
  Dataset test;
};

/// Partitions users into k folds. Item indices are shared with the input so a
/// model trained on `train` applies to `test`.
std::vector<Fold> split_folds(const Dataset& d, int k, std::uint64_t seed);

/// Restricts a dataset to the given users (re-densified, item space kept).
Dataset subset_users(const Dataset& d, const std::vector<UserId>& users);

}  // namespace agenda
