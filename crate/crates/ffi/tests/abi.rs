use std::ffi::CStr;
use std::ptr;

use gfee_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(gfee_last_error()) }.to_string_lossy().into_owned()
}

/// Path 1-2-3 plus 4 attached to 3, in two copies with different weights.
unsafe fn small_collection() -> *mut GfeeCollection {
    let c = gfee_collection_new(4);
    let u = [1u32, 2, 3];
    let v = [2u32, 3, 4];
    assert_eq!(gfee_collection_add_graph(c, u.as_ptr(), v.as_ptr(), ptr::null(), 3, false), GfeeStatus::Ok);
    let w = [2.0, 1.0, 0.5];
    assert_eq!(gfee_collection_add_graph(c, u.as_ptr(), v.as_ptr(), w.as_ptr(), 3, false), GfeeStatus::Ok);
    c
}

#[test]
fn fuse_matches_library() {
    unsafe {
        let c = small_collection();
        assert_eq!(gfee_collection_len(c), 2);
        let y = [1u32, 1, 2, 2];
        let labels = gfee_labels_new(y.as_ptr(), 4);
        let mut emb = ptr::null_mut();
        assert_eq!(gfee_fuse(c, labels, &mut emb), GfeeStatus::Ok);
        let (rows, cols) = (gfee_embedding_rows(emb), gfee_embedding_cols(emb));
        assert_eq!((rows, cols), (4, 4));
        let mut buf = vec![0.0; rows * cols];
        assert_eq!(gfee_embedding_copy(emb, buf.as_mut_ptr(), buf.len()), GfeeStatus::Ok);

        let graphs = vec![
            gfee::EdgeList::from_pairs(4, [(0, 1), (1, 2), (2, 3)]),
            gfee::EdgeList::new(
                4,
                vec![gfee::Edge::new(0, 1, 2.0), gfee::Edge::new(1, 2, 1.0), gfee::Edge::new(2, 3, 0.5)],
            ),
        ];
        let direct = gfee::fuse(
            &gfee::GraphCollection::from_edgelists(graphs),
            &gfee::LabelVector::from_labels(y.to_vec()),
        )
        .unwrap();
        assert_eq!(buf, direct.z.iter().copied().collect::<Vec<_>>());

        let mut short = vec![0.0; 3];
        assert_eq!(gfee_embedding_copy(emb, short.as_mut_ptr(), 3), GfeeStatus::InvalidArgument);
        gfee_embedding_free(emb);
        gfee_labels_free(labels);
        gfee_collection_free(c);
    }
}

#[test]
fn errors_are_reported() {
    unsafe {
        let c = gfee_collection_new(3);
        let (u, v) = ([1u32], [5u32]);
        assert_eq!(gfee_collection_add_graph(c, u.as_ptr(), v.as_ptr(), ptr::null(), 1, false), GfeeStatus::InvalidArgument);
        assert!(last_error().contains("outside 1..=3"), "{}", last_error());

        // no graphs added: validation failure
        let y = [1u32, 2, 2];
        let labels = gfee_labels_new(y.as_ptr(), 3);
        let mut emb = ptr::null_mut();
        assert_eq!(gfee_fuse(c, labels, &mut emb), GfeeStatus::Validation);
        assert!(emb.is_null());
        assert!(!last_error().is_empty());

        assert_eq!(gfee_fuse(ptr::null(), labels, &mut emb), GfeeStatus::NullPointer);
        let (mut m, mut s) = (0.0, 0.0);
        assert_eq!(gfee_cross_validate(c, labels, 1, 1, 5, 0, &mut m, &mut s), GfeeStatus::Validation);
        gfee_labels_free(labels);
        gfee_collection_free(c);
        gfee_collection_free(ptr::null_mut());
    }
}

#[test]
fn cross_validation_is_deterministic() {
    unsafe {
        let n = 40u32;
        // two cliques of 20, labels by clique
        let (mut u, mut v) = (Vec::new(), Vec::new());
        for a in 1..=n {
            for b in a + 1..=n {
                if (a <= 20) == (b <= 20) {
                    u.push(a);
                    v.push(b);
                }
            }
        }
        let c = gfee_collection_new(n as usize);
        assert_eq!(gfee_collection_add_graph(c, u.as_ptr(), v.as_ptr(), ptr::null(), u.len(), false), GfeeStatus::Ok);
        let y: Vec<u32> = (1..=n).map(|i| if i <= 20 { 1 } else { 2 }).collect();
        let labels = gfee_labels_new(y.as_ptr(), y.len());
        let (mut m1, mut s1, mut m2, mut s2) = (1.0, 1.0, 1.0, 1.0);
        assert_eq!(gfee_cross_validate(c, labels, 5, 3, 5, 9, &mut m1, &mut s1), GfeeStatus::Ok);
        assert_eq!(gfee_cross_validate(c, labels, 5, 3, 5, 9, &mut m2, &mut s2), GfeeStatus::Ok);
        assert_eq!((m1, s1), (m2, s2));
        assert_eq!(m1, 0.0);
        assert_eq!(gfee_cross_validate(c, labels, 1, 3, 5, 9, &mut m1, &mut s1), GfeeStatus::InvalidArgument);
        gfee_labels_free(labels);
        gfee_collection_free(c);
    }
}

#[test]
fn version_string() {
    let v = unsafe { CStr::from_ptr(gfee_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}
