mod common;

use common::{kl_error, l2_error, layer_error, mse_error, Precision, F32, F64};

fn check(name: &str, err: f64, p: &Precision) {
    assert!(
        err < p.tol,
        "{name}: relative error {err:.2e} exceeds {:.0e}",
        p.tol
    );
}

macro_rules! layer_tests {
    ($($name:ident),*) => {
        $(
            mod $name {
                use super::*;

                #[test]
                fn f32() {
                    check(stringify!($name), layer_error::<f32>(stringify!($name), &F32), &F32);
                }

                #[test]
                fn f64() {
                    check(stringify!($name), layer_error::<f64>(stringify!($name), &F64), &F64);
                }
            }
        )*
    };
}

layer_tests!(
    dense,
    conv2d,
    transposed_conv,
    batchnorm_train,
    batchnorm_infer,
    maxpool,
    maxpool_odd_edges,
    global_maxpool,
    relu,
    softmax,
    dropout,
    reshape,
    identity_dropout_infer
);

#[test]
fn kl_through_softmax() {
    check("kl f32", kl_error::<f32>(&F32), &F32);
    check("kl f64", kl_error::<f64>(&F64), &F64);
}

#[test]
fn l2_penalty() {
    check("l2 f32", l2_error::<f32>(&F32), &F32);
    check("l2 f64", l2_error::<f64>(&F64), &F64);
}

#[test]
fn mse() {
    check("mse f32", mse_error::<f32>(&F32), &F32);
    check("mse f64", mse_error::<f64>(&F64), &F64);
}
