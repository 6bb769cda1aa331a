#pragma once

#include "benchmark.hpp"
#include "boost.hpp"
#include "csv.hpp"
#include "data.hpp"
#include "inference.hpp"
#include "losses.hpp"
#include "matrix.hpp"
#include "metrics.hpp"
#include "parallel.hpp"
#include "rng.hpp"
#include "serialize.hpp"
#include "simgen.hpp"
#include "tree.hpp"
#include "twostage.hpp"
