#pragma once

#include "epihmc/errors.hpp"
#include "epihmc/spline_basis.hpp"
#include "epihmc/model_spec.hpp"
#include "epihmc/params.hpp"
#include "epihmc/runge_kutta.hpp"
#include "epihmc/compartmental_ode.hpp"
#include "epihmc/sensitivity.hpp"
#include "epihmc/priors.hpp"
#include "epihmc/posterior.hpp"
#include "epihmc/sampler.hpp"
#include "epihmc/diagnostics.hpp"
#include "epihmc/synthdata.hpp"
#include "epihmc/fit.hpp"
#include "epihmc/gradient_check.hpp"
#include "epihmc/io.hpp"
