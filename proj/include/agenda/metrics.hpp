#pragma once

#include <span>
#include <vector>

#include "agenda/types.hpp"

namespace agenda {

/// Area under the ROC curve in its Mann-Whitney form: the fraction of
/// (positive, negative) pairs ranked correctly, ties counted as one half.
/// Throws when only one class is present.
double auc(std::span<const double> scores, std::span<const UserType> labels);

double accuracy(std::span<const UserType> predicted, std::span<const UserType> labels);

}  // namespace agenda
