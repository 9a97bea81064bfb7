#ifndef MODELFIT_MODELFIT_HPP
#define MODELFIT_MODELFIT_HPP

// Model identification from observed data: least-squares objectives for
// function, ODE, and constant-coefficient PDE conjectures, steepest-descent
// minimization with backtracking, multi-start and basin-of-attraction
// search, and a-posteriori error certificates with noise envelopes.

#include "modelfit/certify.hpp"
#include "modelfit/data.hpp"
#include "modelfit/descent.hpp"
#include "modelfit/errors.hpp"
#include "modelfit/expr.hpp"
#include "modelfit/integrate.hpp"
#include "modelfit/objective.hpp"
#include "modelfit/util.hpp"
#include "modelfit/version.hpp"

#endif // MODELFIT_MODELFIT_HPP
