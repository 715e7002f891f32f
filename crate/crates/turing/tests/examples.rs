#[path = "../examples/rating_study.rs"]
mod rating_study;
#[path = "../examples/rating_service.rs"]
mod rating_service;

#[test]
fn rating_study_runs() {
    rating_study::run().unwrap();
}

#[test]
fn rating_service_runs() {
    rating_service::run().unwrap();
}
