#pragma once

#include "seqattn/data.hpp"
#include "seqattn/errors.hpp"
#include "seqattn/evaluate.hpp"
#include "seqattn/io.hpp"
#include "seqattn/lasso.hpp"
#include "seqattn/linalg.hpp"
#include "seqattn/models.hpp"
#include "seqattn/optim.hpp"
#include "seqattn/selectors.hpp"
#include "seqattn/stats.hpp"
#include "seqattn/verify.hpp"

namespace seqattn {
inline constexpr const char* kVersion = "0.1.0";
}
