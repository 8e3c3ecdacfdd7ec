#pragma once

#include "ottrim/config.hpp"
#include "ottrim/error.hpp"
#include "ottrim/exact_ot.hpp"
#include "ottrim/flops.hpp"
#include "ottrim/frequency_prior.hpp"
#include "ottrim/projection.hpp"
#include "ottrim/rng.hpp"
#include "ottrim/scoring.hpp"
#include "ottrim/synthetic_bench.hpp"
#include "ottrim/tensor_io.hpp"
#include "ottrim/transport.hpp"
#include "ottrim/types.hpp"
#include "ottrim/oracle_check.hpp"
