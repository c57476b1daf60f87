//! Round trips through the C ABI, called from Rust.

use std::ffi::CStr;
use std::ptr;

use kernel_loo::kernels::{build_kernel, KernelSpec};
use kernel_loo::loo::loo_regularized;
use kernel_loo_ffi::*;

fn last_error() -> String {
    let p = kl_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn blobs_kernel_and_regularized_loo() {
    unsafe {
        let mut ds = ptr::null_mut();
        assert_eq!(kl_dataset_synth_blobs(40, 5, 3, 2.0, 7, &mut ds), KlStatus::Ok);
        let (mut n, mut d, mut c) = (0, 0, 0);
        assert_eq!(kl_dataset_shape(ds, &mut n, &mut d, &mut c), KlStatus::Ok);
        assert_eq!((n, d, c), (40, 5, 3));

        let mut k = ptr::null_mut();
        assert_eq!(kl_kernel_compute(ds, KlKernelFamily::Ntk, 3, ptr::null(), 0, 0, &mut k), KlStatus::Ok);
        let mut size = 0;
        assert_eq!(kl_kernel_size(k, &mut size), KlStatus::Ok);
        assert_eq!(size, 40);
        let mut values = vec![0.0; 1600];
        assert_eq!(kl_kernel_copy_values(k, values.as_mut_ptr(), values.len()), KlStatus::Ok);
        assert_eq!(kl_kernel_copy_values(k, values.as_mut_ptr(), 10), KlStatus::InvalidArgument);

        let mut r = ptr::null_mut();
        assert_eq!(kl_loo_regularized(k, ds, 0.1, &mut r), KlStatus::Ok);
        let (mut loss, mut acc) = (0.0, 0.0);
        assert_eq!(kl_loo_report_loss(r, &mut loss), KlStatus::Ok);
        assert_eq!(kl_loo_report_accuracy(r, &mut acc), KlStatus::Ok);

        let lib = kernel_loo::dataio::synth_blobs(40, 5, 3, 2.0, 7).unwrap();
        let kk = build_kernel(&KernelSpec::ntk(3), lib.inputs(), None).unwrap();
        let expected = loo_regularized(kk.values(), lib.targets(), 0.1).unwrap();
        assert_eq!(loss, expected.loss());
        assert_eq!(acc, expected.accuracy());
        for i in 0..40 {
            for j in 0..40 {
                assert_eq!(values[i * 40 + j], kk.values()[(i, j)]);
            }
        }

        let (mut rows, mut cols) = (0, 0);
        assert_eq!(kl_loo_report_shape(r, &mut rows, &mut cols), KlStatus::Ok);
        assert_eq!((rows, cols), (40, 3));
        let mut res = vec![0.0; rows * cols];
        assert_eq!(kl_loo_report_copy_residuals(r, res.as_mut_ptr(), res.len()), KlStatus::Ok);
        assert_eq!(res[3 * 3 + 1], expected.residuals()[(3, 1)]);

        let mut json = ptr::null_mut();
        assert_eq!(kl_loo_report_to_json(r, &mut json), KlStatus::Ok);
        let text = CStr::from_ptr(json).to_str().unwrap().to_owned();
        kl_string_free(json);
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["n"], 40);

        let mut count = 99;
        assert_eq!(kl_loo_report_flagged(r, ptr::null_mut(), 0, &mut count), KlStatus::Ok);
        assert_eq!(count, 0);

        kl_loo_report_free(r);
        kl_kernel_free(k);
        kl_dataset_free(ds);
    }
}

#[test]
fn explicit_data_zero_reg_noisy_and_binary() {
    unsafe {
        let x = [0.0, 1.0, 1.0, 0.0, 1.0, 1.0, -1.0, 0.5];
        let labels = [0usize, 1, 1, 0];
        let mut ds = ptr::null_mut();
        assert_eq!(kl_dataset_from_labels(x.as_ptr(), 4, 2, labels.as_ptr(), 2, &mut ds), KlStatus::Ok);
        let mut k = ptr::null_mut();
        assert_eq!(kl_kernel_compute(ds, KlKernelFamily::Nngp, 2, ptr::null(), 0, 0, &mut k), KlStatus::Ok);

        let mut zr = ptr::null_mut();
        assert_eq!(kl_loo_zero_reg(k, ds, &mut zr), KlStatus::Ok);
        let mut noisy = ptr::null_mut();
        assert_eq!(kl_loo_noisy(k, ds, ds, &mut noisy), KlStatus::Ok);
        let (mut a, mut b) = (0.0, 0.0);
        kl_loo_report_loss(zr, &mut a);
        kl_loo_report_loss(noisy, &mut b);
        assert_eq!(a.to_bits(), b.to_bits());

        let y = [-1.0, 1.0, 1.0, -1.0];
        let mut bin = ptr::null_mut();
        assert_eq!(kl_loo_binary(k, y.as_ptr(), 4, 0.5, &mut bin), KlStatus::Ok);
        let bad = [-1.0, 0.3, 1.0, -1.0];
        let mut none = ptr::null_mut();
        assert_eq!(kl_loo_binary(k, bad.as_ptr(), 4, 0.5, &mut none), KlStatus::InvalidArgument);
        assert!(none.is_null());

        for r in [zr, noisy, bin] {
            kl_loo_report_free(r);
        }
        kl_kernel_free(k);
        kl_dataset_free(ds);
    }
}

#[test]
fn random_feature_kernel_from_matrix_round_trip() {
    unsafe {
        let mut ds = ptr::null_mut();
        kl_dataset_synth_blobs(12, 3, 2, 1.0, 1, &mut ds);
        let widths = [30usize, 20];
        let mut k = ptr::null_mut();
        assert_eq!(
            kl_kernel_compute(ds, KlKernelFamily::RandomFeature, 0, widths.as_ptr(), 2, 5, &mut k),
            KlStatus::Ok
        );
        let mut v = vec![0.0; 144];
        kl_kernel_copy_values(k, v.as_mut_ptr(), 144);
        let mut k2 = ptr::null_mut();
        assert_eq!(kl_kernel_from_matrix(v.as_ptr(), 12, &mut k2), KlStatus::Ok);
        let mut v2 = vec![0.0; 144];
        kl_kernel_copy_values(k2, v2.as_mut_ptr(), 144);
        assert_eq!(v, v2);
        kl_kernel_free(k);
        kl_kernel_free(k2);
        kl_dataset_free(ds);
    }
}

#[test]
fn errors_carry_status_and_message() {
    unsafe {
        let mut ds = ptr::null_mut();
        assert_eq!(kl_dataset_shape(ptr::null(), ptr::null_mut(), ptr::null_mut(), ptr::null_mut()), KlStatus::NullPointer);
        assert!(last_error().contains("dataset"));
        assert_eq!(kl_dataset_synth_blobs(10, 2, 2, 1.0, 0, ptr::null_mut()), KlStatus::NullPointer);

        assert_eq!(kl_dataset_synth_blobs(10, 0, 2, 1.0, 0, &mut ds), KlStatus::InvalidArgument);
        assert!(!last_error().is_empty());

        let path = c"/nonexistent/file.csv";
        assert_eq!(kl_dataset_load_csv(path.as_ptr(), 2, false, false, &mut ds), KlStatus::Io);

        let asym = [1.0, 2.0, 0.0, 1.0];
        let mut k = ptr::null_mut();
        assert_eq!(kl_kernel_from_matrix(asym.as_ptr(), 2, &mut k), KlStatus::InvalidArgument);

        // Rank 2 of 3 with null direction e_3: points 0 and 1 have no
        // null-space mass.
        let diag = [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0];
        assert_eq!(kl_kernel_from_matrix(diag.as_ptr(), 3, &mut k), KlStatus::Ok);
        let x = [1.0, 2.0, 3.0];
        let mut small = ptr::null_mut();
        kl_dataset_from_labels(x.as_ptr(), 3, 1, [0usize, 1, 0].as_ptr(), 2, &mut small);
        let mut r = ptr::null_mut();
        assert_eq!(kl_loo_zero_reg(k, small, &mut r), KlStatus::Singular);
        assert!(last_error().contains("null-space"));

        // A successful call clears the message.
        let mut n = 0;
        assert_eq!(kl_kernel_size(k, &mut n), KlStatus::Ok);
        assert!(kl_last_error_message().is_null());

        kl_kernel_free(k);
        kl_dataset_free(small);
        kl_dataset_free(ptr::null_mut());
        kl_loo_report_free(ptr::null_mut());
        kl_string_free(ptr::null_mut());
    }
}

#[test]
fn generated_header_compiles_as_c() {
    let header = concat!(env!("CARGO_MANIFEST_DIR"), "/include/kernel_loo.h");
    let text = std::fs::read_to_string(header).unwrap();
    for name in ["kl_loo_regularized", "kl_last_error_message", "KL_STATUS_SINGULAR", "typedef struct KlKernel KlKernel"] {
        assert!(text.contains(name), "header lacks {name}");
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(
        &src,
        "#include \"kernel_loo.h\"\n\
         int main(void) {\n\
           KlDataset *ds = 0; KlKernel *k = 0; KlLooReport *r = 0; double loss;\n\
           if (kl_dataset_synth_blobs(10, 2, 2, 1.0, 0, &ds) != KL_STATUS_OK) return 1;\n\
           kl_kernel_compute(ds, KL_KERNEL_FAMILY_NTK, 2, 0, 0, 0, &k);\n\
           kl_loo_regularized(k, ds, 0.1, &r);\n\
           kl_loo_report_loss(r, &loss);\n\
           kl_loo_report_free(r); kl_kernel_free(k); kl_dataset_free(ds);\n\
           return 0;\n\
         }\n",
    )
    .unwrap();
    let include = concat!(env!("CARGO_MANIFEST_DIR"), "/include");
    for compiler in ["cc", "c++"] {
        let lang = if compiler == "cc" { "c" } else { "c++" };
        match std::process::Command::new(compiler)
            .args(["-fsyntax-only", "-Wall", "-Werror", "-x", lang, "-I", include])
            .arg(&src)
            .output()
        {
            Ok(out) => assert!(out.status.success(), "{compiler}: {}", String::from_utf8_lossy(&out.stderr)),
            Err(_) => eprintln!("{compiler} not found; skipping header compile check"),
        }
    }
}
