use llib_core::library::Catalog;
use llib_core::{read_csv, ColumnType, Error, Relation, Schema, Session, Value};

fn rel(cols: &[(&str, ColumnType)], rows: Vec<Vec<Value>>) -> Relation {
    Relation::from_rows(Schema::of(cols).unwrap(), rows).unwrap()
}

fn d(x: f64) -> Value {
    Value::double(x).unwrap()
}

fn int_edges(name: (&str, &str), edges: &[(i64, i64)]) -> Relation {
    rel(
        &[(name.0, ColumnType::Integer), (name.1, ColumnType::Integer)],
        edges.iter().map(|&(a, b)| vec![a.into(), b.into()]).collect(),
    )
}

#[test]
fn tc_with_mapped_columns() {
    let mut session = Session::new("TC");
    let mut tc = session.new_function("TC").unwrap();
    assert_eq!(tc.slots()[0].attribute_names().collect::<Vec<_>>(), ["From", "To"]);
    tc.set_direction(&[("FromCol", "Node1"), ("ToCol", "Node2")]).unwrap();
    let df = int_edges(("Node1", "Node2"), &[(1, 2), (2, 3)]);
    let out = tc.materialize(&[df.clone()], &mut session).unwrap();
    let rows: Vec<_> = out.rows().cloned().collect();
    assert_eq!(
        rows,
        vec![
            vec![1.into(), 2.into()],
            vec![1.into(), 3.into()],
            vec![2.into(), 3.into()]
        ]
    );
    assert_eq!(session.stats_log().len(), 1);

    let seq = tc.materialize_rows(&[df.clone()], &mut session).unwrap();
    assert_eq!(seq, rows);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("result.csv");
    tc.run(&[df.clone()], &path, &mut session).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text, "From,To\n1,2\n1,3\n2,3\n");
    let back = read_csv(&path, out.schema(), true).unwrap();
    assert_eq!(back, out);

    assert!(matches!(
        tc.run(&[df], dir.path().join("missing/dir/x.csv"), &mut session),
        Err(Error::Io { .. })
    ));
}

#[test]
fn unmapped_input_uses_attribute_names() {
    let mut session = Session::new("TC");
    let tc = session.new_function("TC").unwrap();
    let out = tc
        .materialize_rows(&[int_edges(("From", "To"), &[(1, 2)])], &mut session)
        .unwrap();
    assert_eq!(out, vec![vec![Value::from(1), Value::from(2)]]);
    let empty = tc
        .materialize_rows(&[int_edges(("From", "To"), &[])], &mut session)
        .unwrap();
    assert!(empty.is_empty());
    assert!(matches!(
        tc.materialize(&[int_edges(("A", "B"), &[])], &mut session),
        Err(Error::SchemaMismatch(_))
    ));
}

#[test]
fn mlm_example() {
    let mut session = Session::new("MLM");
    let mut mlm = session.new_function("MLM").unwrap();
    mlm.set_direction(&[("MCol", "Member"), ("ProfitCol", "Bonus")]).unwrap();
    mlm.set_sec_direction(&[("MCol", "Mem1"), ("M2Col", "Mem2")]).unwrap();
    mlm.set_param("proportion", 0.1).unwrap();
    let sales = rel(
        &[("Member", ColumnType::String), ("Bonus", ColumnType::Integer)],
        vec![
            vec!["a".into(), 100.into()],
            vec!["b".into(), 50.into()],
            vec!["c".into(), 10.into()],
        ],
    );
    let sponsor = rel(
        &[("Mem1", ColumnType::String), ("Mem2", ColumnType::String)],
        vec![vec!["a".into(), "b".into()], vec!["b".into(), "c".into()]],
    );
    let out = mlm.materialize(&[sales.clone(), sponsor], &mut session).unwrap();
    let got: Vec<(String, f64)> = out
        .rows()
        .map(|r| (r[0].to_string(), r[1].as_f64().unwrap()))
        .collect();
    let want = [("a", 106.0), ("b", 51.0), ("c", 10.0)];
    assert_eq!(got.len(), 3);
    for ((gm, gb), (wm, wb)) in got.iter().zip(want) {
        assert_eq!(gm, wm);
        assert!((gb - wb).abs() < 1e-9, "{gm}: {gb} vs {wb}");
    }

    let cyclic = rel(
        &[("Mem1", ColumnType::String), ("Mem2", ColumnType::String)],
        vec![vec!["a".into(), "b".into()], vec!["b".into(), "a".into()]],
    );
    assert!(matches!(
        mlm.materialize(&[sales, cyclic], &mut session),
        Err(Error::CycleError(_))
    ));
}

fn vtrain(rows: &[(i64, i64, f64, f64)]) -> Relation {
    rel(
        &[
            ("id", ColumnType::Integer),
            ("c", ColumnType::Integer),
            ("v", ColumnType::Double),
            ("y", ColumnType::Double),
        ],
        rows.iter()
            .map(|&(i, c, v, y)| vec![i.into(), c.into(), d(v), d(y)])
            .collect(),
    )
}

#[test]
fn linreg_converges_and_predicts() {
    let mut session = Session::new("LR");
    let mut lr = session.new_function("LinRegBGD").unwrap();
    lr.set_direction(&[("Id", "id"), ("C", "c"), ("V", "v"), ("Y", "y")]).unwrap();
    lr.set_param("lr", 0.05).unwrap();
    lr.set_param("iterations", 200).unwrap();
    let model = lr
        .materialize(&[vtrain(&[(1, 1, 1.0, 2.0), (2, 1, 2.0, 4.0)])], &mut session)
        .unwrap();
    assert_eq!(model.len(), 1);
    let p = model.rows().next().unwrap()[1].as_f64().unwrap();
    assert!((p - 2.0).abs() < 1e-3, "{p}");

    let test = rel(
        &[("id", ColumnType::Integer), ("c", ColumnType::Integer), ("v", ColumnType::Double)],
        vec![vec![7.into(), 1.into(), d(3.0)]],
    );
    let fixed = rel(
        &[("C", ColumnType::Integer), ("P", ColumnType::Double)],
        vec![vec![1.into(), d(2.0)]],
    );
    let pred = lr.predict(&fixed, &test, &mut session).unwrap();
    assert_eq!(pred.rows().cloned().collect::<Vec<_>>(), vec![vec![7.into(), d(6.0)]]);
}

#[test]
fn logreg_zero_model_predicts_one() {
    let mut session = Session::new("LogR");
    let lr = session.new_function("LogRegBGD").unwrap();
    let zero = rel(
        &[("C", ColumnType::Integer), ("P", ColumnType::Double)],
        vec![vec![1.into(), d(0.0)], vec![2.into(), d(0.0)]],
    );
    let test = rel(
        &[("Id", ColumnType::Integer), ("C", ColumnType::Integer), ("V", ColumnType::Double)],
        vec![vec![1.into(), 1.into(), d(3.0)], vec![1.into(), 2.into(), d(-1.0)]],
    );
    let pred = lr.predict(&zero, &test, &mut session).unwrap();
    assert_eq!(pred.rows().cloned().collect::<Vec<_>>(), vec![vec![1.into(), 1.into()]]);
}

#[test]
fn sssp_rejects_negative_weights_and_requires_source() {
    let mut session = Session::new("SSSP");
    let mut f = session.new_function("SSSP").unwrap();
    let edges = rel(
        &[("From", ColumnType::Integer), ("To", ColumnType::Integer), ("Weight", ColumnType::Double)],
        vec![vec![1.into(), 2.into(), d(-1.0)]],
    );
    assert!(matches!(
        f.materialize(&[edges.clone()], &mut session),
        Err(Error::MissingParam(p)) if p == "source"
    ));
    f.set_param("source", 1).unwrap();
    assert!(matches!(
        f.materialize(&[edges], &mut session),
        Err(Error::ParamError(_))
    ));
}

#[test]
fn register_user_functions() {
    let mut session = Session::new("u");
    let sg = "database({ parent(P: integer, C: integer) }).
sg(X, Y) <- parent(P, X), parent(P, Y), X != Y.
sg(X, Y) <- parent(A, X), sg(A, B), parent(B, Y).
query sg(X, Y).";
    session.register_function("myTC", sg, &[("parent", &[])], &[]).unwrap();
    let f = session.new_function("myTC").unwrap();
    let parent = int_edges(("P", "C"), &[(1, 2), (1, 3)]);
    assert_eq!(f.materialize(&[parent], &mut session).unwrap().len(), 2);

    assert!(matches!(
        session.register_function("myTC", sg, &[("parent", &[])], &[]),
        Err(Error::NameCollision(_))
    ));
    assert!(matches!(
        session.register_function("TC", sg, &[("parent", &[])], &[]),
        Err(Error::NameCollision(_))
    ));
    let bad = "database({ e(A: integer, B: integer) }).
p(X, sum<Y, Y>) <- e(X, Y).
p(X, sum<Z, S>) <- p(Y, S), e(Y, X), Z = Y.
query p(X, S).";
    assert!(matches!(
        session.register_function("bad", bad, &[("e", &[])], &[]),
        Err(Error::UnstratifiableAggregate { .. })
    ));
    let param = "database({ e(A: integer) }).
p(X) <- e(X), X > $min.
query p(X).";
    session
        .register_function("above", param, &[("e", &["A"])], &[("min", Value::from(1))])
        .unwrap();
    let mut f = session.new_function("above").unwrap();
    let e = rel(&[("A", ColumnType::Integer)], (0..5).map(|i| vec![Value::from(i)]).collect());
    assert_eq!(f.materialize(&[e.clone()], &mut session).unwrap().len(), 3);
    f.set_param("min", 3).unwrap();
    assert_eq!(f.materialize(&[e], &mut session).unwrap().len(), 1);
}

#[test]
fn catalog_has_builtins() {
    let cat = Catalog::new();
    let names: Vec<_> = cat.names().collect();
    for n in ["TC", "ConnectedComponents", "SSSP", "MLM", "LinRegBGD", "LogRegBGD"] {
        assert!(names.contains(&n), "{n}");
    }
    let info = cat.describe();
    let mlm = info.iter().find(|f| f.name == "MLM").unwrap();
    assert_eq!(mlm.slots.len(), 2);
    assert!(mlm.params.iter().any(|p| p.name == "proportion"));
}
