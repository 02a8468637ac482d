#pragma once

#include "speclens/core.hpp"
#include "speclens/datasets.hpp"
#include "speclens/estimator.hpp"
#include "speclens/eval.hpp"
#include "speclens/io.hpp"
#include "speclens/kernels.hpp"
#include "speclens/model.hpp"
#include "speclens/numeric.hpp"
#include "speclens/oracle.hpp"
#include "speclens/spectral.hpp"
