"""Published reference values for the four result tables (static data, not computed here).

A trailing parenthesised digit in the source, e.g. ``0.4880(8)``, is stored
as an extra decimal place (``0.48808``).
"""

# dv: (alpha*, eps_BP uncoupled, eps_MAP uncoupled, eps_BP(alpha=1/2), eps_BP(alpha*))
TABLE_I = {
    3: (0.4517, 0.4294, 0.48815, 0.48808, 0.48810),
    4: (0.4017, 0.3834, 0.49774, 0.4944, 0.4976),
    5: (0.3590, 0.3415, 0.49949, 0.4827, 0.4989),
    6: (0.3252, 0.3075, 0.49988, 0.4603, 0.4979),
    7: (0.2978, 0.2798, 0.49997, 0.4338, 0.4965),
    8: (0.2745, 0.2570, 0.49999, 0.4074, 0.4953),
    9: (0.2544, 0.2378, 0.49999, 0.3829, 0.4943),
    10: (0.2368, 0.2215, 0.49999, 0.3606, 0.4936),
}

# dv: (nu1*, nu2*, eps_BP([1/3,1/3,1/3]), eps_BP(nu*), Delta([1/3,1/3,1/3]), Delta(nu*))
TABLE_II = {
    3: (0.0789, 0.4737, 0.48815, 0.48815, 0.911, 0.676),
    4: (0.1842, 0.4211, 0.4977, 0.49774, 0.961, 0.893),
    5: (0.2632, 0.2105, 0.4989, 0.49947, 0.983, 0.975),
    6: (0.2465, 0.1496, 0.4967, 0.49987, 0.992, 0.982),
    7: (0.2355, 0.1247, 0.4904, 0.49997, 0.997, 0.987),
    8: (0.2244, 0.1025, 0.4797, 0.49998, 0.998, 0.991),
    9: (0.2147, 0.0803, 0.4652, 0.49995, 0.999, 0.993),
    10: (0.2063, 0.0665, 0.4486, 0.49994, 1.000, 0.994),
}

# dv: (alpha_upper*, alpha_lower*, eps_BP)
TABLE_III = {
    5: (0.350, 0.362, 0.4989),
    6: (0.278, 0.375, 0.4998),
    7: (0.248, 0.349, 0.4998),
    8: (0.227, 0.323, 0.4996),
    9: (0.209, 0.300, 0.4995),
    10: (0.195, 0.279, 0.4994),
}

# (dv, b1, b2): eps_BP
TABLE_IV = {
    (3, 1, 1): 0.48815,
    (4, 1, 1): 0.49741,
    (5, 1, 1): 0.49811,
    (6, 1, 1): 0.49667,
    (7, 1, 5): 0.49257,
    (8, 1, 5): 0.49451,
    (9, 1, 5): 0.49627,
    (10, 1, 5): 0.49711,
    (11, 1, 5): 0.49693,
    (12, 1, 5): 0.49612,
    (13, 1, 5): 0.49502,
    (14, 1, 5): 0.49377,
    (15, 1, 5): 0.49246,
    (16, 1, 5): 0.49113,
    (17, 1, 5): 0.48981,
    (18, 1, 5): 0.48850,
}

REFERENCE_L = 100
THRESHOLD_TOL = 1e-3
DELTA_TOL = 5e-4
