#pragma once

#include "stringgp/errors.hpp"
#include "stringgp/logging.hpp"
#include "stringgp/linalg.hpp"
#include "stringgp/random.hpp"
#include "stringgp/kernels.hpp"
#include "stringgp/derivative_gp.hpp"
#include "stringgp/string_gp.hpp"
#include "stringgp/membrane.hpp"
#include "stringgp/optimizer.hpp"
#include "stringgp/regression.hpp"
#include "stringgp/likelihoods.hpp"
#include "stringgp/mcmc.hpp"
#include "stringgp/kernel_sampler.hpp"
#include "stringgp/experiments.hpp"
#include "stringgp/io.hpp"
