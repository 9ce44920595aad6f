"""
Four estimators on one simulated dataset
========================================

One replication of the benchmark: the doubly penalized estimator, the row
group lasso, the elementwise lasso and the two-step coarse-then-fine
approximation, all tuned on the validation split and scored on the test
split against the true probabilities.
"""
from mrmlr.benchmark import BenchSettings, run_replication

settings = BenchSettings(n_train=500, n_val=500, n_test=2000, n_gamma=10, n_lambda=3)

for model_id in (1, 6):
    print(f"Model {model_id}")
    for row in run_replication(model_id, p=50, rep=0, settings=settings):
        dof = "-" if row["dof"] is None else row["dof"]
        print(f"  {row['method']:<7} hellinger {row['hellinger']:.4f}  kl {row['kl']:.4f}  "
              f"error {row['error']:.3f}  dof {dof}")
