__all__ = ["dataset_test", "kernel_test", "laplacian_test", "harmonics_test",
           "filtering_test", "xval_test", "cli_test", "acceptance_test"]
