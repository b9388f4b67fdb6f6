# Настройки проекта ksym
# Все значения можно переопределить через .env (см. .env.example)

import os

from dotenv import load_dotenv

load_dotenv()

VERSION = "0.4.0"

# Окружение
OUT_DIR = os.getenv("KSYM_OUT_DIR", "runs")
WORKERS = int(os.getenv("KSYM_WORKERS", "1"))
LOG_LEVEL = os.getenv("KSYM_LOG_LEVEL", "INFO")
LOG_DIR = os.getenv("KSYM_LOG_DIR", "logs")

# Сетка по умолчанию (N_r x N_theta)
DEFAULT_N_R = 128
DEFAULT_N_THETA = 128

# Нелинейности
GAUSS_POINTS = 16
EXP_SAFE = 700.0
# Ниже этой относительной длины отрезка разностное отношение теряет точность
CLOSED_FORM_MIN_SPAN = 1e-2

# Спектры
ZERO_TOL_REL = 1e-7
# Невязка пары ‖Av − λMv‖/‖Mv‖: не больше max(EIG_RESIDUAL_TOL, EIG_RESIDUAL_TOL_REL * ‖B‖₁)
EIG_RESIDUAL_TOL = 1e-8
EIG_RESIDUAL_TOL_REL = 1e-10
DENSE_MAX_NODES = int(os.getenv("KSYM_DENSE_MAX_NODES", "4096"))
LANCZOS_MAXITER = 5000
MORSE_EIGS = 6
MORSE_EIGS_MAX = 96

# Решатели
RADIAL_TOL = 1e-10
SHOOTING_BISECTIONS = 200
SHOOTING_SCAN = 80
NEWTON_TOL = 1e-9
NEWTON_MAXITER = 60
LINE_SEARCH_HALVINGS = 30
ARMIJO_C = 1e-4
NEHARI_MAXITER = 4000
NEHARI_GTOL = 1e-7
# Невязка нодального масштабирования относительно (u⁺)ᵀKu⁺ + (u⁻)ᵀKu⁻
NODAL_SCALING_TOL = 1e-10

# Различимость решений
DISTINCT_DISTANCE = 1e-3
DISTINCT_ENERGY = 1e-6

# Классификация симметрии
TOL_RADIAL = 1e-6
TOL_SYM = 1e-3
TOL_SIGN_REL = 1e-8
TOL_MONO = 1e-3
# Ниже этого значения h(0) считается нулём (собственные функции нормированы)
H_ZERO_FLOOR = 1e-12
K_INVARIANCE_TOL = 1e-10

# Константа из анализа нодальных радиальных решений
KAPPA = 5.1869
